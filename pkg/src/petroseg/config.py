"""Line-oriented toolkit configuration.

The config file is diff-friendly text, one ``dotted.key = value`` pair
per line, with ``#`` comments.  Unknown keys are rejected by name, and
every numeric field is validated at load.  ``petroseg config init``
emits a file with all defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .c457 import DEFAULT_GRID_COLS, DEFAULT_GRID_ROWS, DEFAULT_TRAVERSE_SPACING_UM
from .colorseg import (
    DEFAULT_AGGREGATE_MIN_UM2,
    DEFAULT_VOID_MIN_UM2,
    AreaFilterSpec,
    ColorRule,
)
from .errors import ConfigError
from .raster import DEFAULT_PITCH_UM, PhaseLabel


@dataclass(frozen=True)
class RuleConfig:
    hue: tuple[float, float]
    sat: tuple[float, float]
    val: tuple[float, float]
    priority: int


@dataclass(frozen=True)
class ToolConfig:
    pitch_um: float = DEFAULT_PITCH_UM
    grid_rows: int = DEFAULT_GRID_ROWS
    grid_cols: int = DEFAULT_GRID_COLS
    filter_aggregate_min_um2: float = DEFAULT_AGGREGATE_MIN_UM2
    filter_void_min_um2: float = DEFAULT_VOID_MIN_UM2
    filter_aggregate_target: PhaseLabel = PhaseLabel.PASTE
    filter_void_target: PhaseLabel = PhaseLabel.PASTE
    filter_connectivity: int = 8
    rule_paste: RuleConfig = RuleConfig((300.0, 350.0), (0.15, 1.0), (0.0, 1.0), 1)
    rule_void: RuleConfig = RuleConfig((20.0, 45.0), (0.30, 1.0), (0.0, 1.0), 0)
    train_iterations: int = 2000
    train_batch: int = 4
    train_crop: int = 128
    train_learning_rate: float = 0.05
    train_momentum: float = 0.9
    train_weight_ce: float = 0.5
    train_weight_lovasz: float = 0.5
    train_seed: int = 0
    train_snapshot_period: int = 100
    train_threads: int = 1
    predict_tile: int = 256
    predict_overlap: int = 32
    traverse_spacing_um: float = DEFAULT_TRAVERSE_SPACING_UM
    traverse_include_border: bool = True
    out_dir: str = "out"
    service_port: int = 8711

    def color_rules(self) -> tuple[ColorRule, ...]:
        return (
            ColorRule(PhaseLabel.VOID, self.rule_void.hue, self.rule_void.sat, self.rule_void.val, self.rule_void.priority),
            ColorRule(PhaseLabel.PASTE, self.rule_paste.hue, self.rule_paste.sat, self.rule_paste.val, self.rule_paste.priority),
        )

    def area_filters(self) -> tuple[AreaFilterSpec, ...]:
        return (
            AreaFilterSpec(PhaseLabel.AGGREGATE, self.filter_aggregate_min_um2, self.filter_aggregate_target, self.filter_connectivity),
            AreaFilterSpec(PhaseLabel.VOID, self.filter_void_min_um2, self.filter_void_target, self.filter_connectivity),
        )

    def train_config(self):
        from .net.train import TrainConfig

        return TrainConfig(
            iterations=self.train_iterations,
            batch=self.train_batch,
            crop=self.train_crop,
            learning_rate=self.train_learning_rate,
            momentum=self.train_momentum,
            weight_ce=self.train_weight_ce,
            weight_lovasz=self.train_weight_lovasz,
            seed=self.train_seed,
            snapshot_period=self.train_snapshot_period,
            threads=self.train_threads,
        )


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}")


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}")


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "yes", "1"):
        return True
    if text.lower() in ("false", "no", "0"):
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def _parse_pair(text: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'min,max', got {text!r}")
    return (_parse_float(parts[0]), _parse_float(parts[1]))


def _parse_phase(text: str) -> PhaseLabel:
    try:
        return {"aggregate": PhaseLabel.AGGREGATE, "paste": PhaseLabel.PASTE, "void": PhaseLabel.VOID}[text.lower()]
    except KeyError:
        raise ConfigError(f"expected aggregate/paste/void, got {text!r}")


def _positive(name):
    def check(v):
        if v <= 0:
            raise ConfigError(f"{name} must be positive, got {v}")
        return v

    return check


def _at_least(name, lo):
    def check(v):
        if v < lo:
            raise ConfigError(f"{name} must be >= {lo}, got {v}")
        return v

    return check


def _in_set(name, allowed):
    def check(v):
        if v not in allowed:
            raise ConfigError(f"{name} must be one of {sorted(allowed)}, got {v}")
        return v

    return check


def _unit_pair(name):
    def check(v):
        lo, hi = v
        if not (0 <= lo <= hi <= 1):
            raise ConfigError(f"{name} must satisfy 0 <= min <= max <= 1, got {v}")
        return v

    return check


def _identity(v):
    return v


def _fmt_pair(v):
    return f"{v[0]:g},{v[1]:g}"


def _fmt_phase(v: PhaseLabel) -> str:
    return v.name.lower()


def _fmt_bool(v: bool) -> str:
    return "true" if v else "false"


# key -> (attribute path, parser, validator, formatter)
_KEYS = {
    "pitch_um": ("pitch_um", _parse_float, _positive("pitch_um"), "{:g}".format),
    "grid.rows": ("grid_rows", _parse_int, _at_least("grid.rows", 1), str),
    "grid.cols": ("grid_cols", _parse_int, _at_least("grid.cols", 1), str),
    "filter.aggregate_min_um2": ("filter_aggregate_min_um2", _parse_float, _at_least("filter.aggregate_min_um2", 0), "{:g}".format),
    "filter.void_min_um2": ("filter_void_min_um2", _parse_float, _at_least("filter.void_min_um2", 0), "{:g}".format),
    "filter.aggregate_target": ("filter_aggregate_target", _parse_phase, _identity, _fmt_phase),
    "filter.void_target": ("filter_void_target", _parse_phase, _identity, _fmt_phase),
    "filter.connectivity": ("filter_connectivity", _parse_int, _in_set("filter.connectivity", {4, 8}), str),
    "rule.paste.hue": (("rule_paste", "hue"), _parse_pair, _identity, _fmt_pair),
    "rule.paste.sat": (("rule_paste", "sat"), _parse_pair, _unit_pair("rule.paste.sat"), _fmt_pair),
    "rule.paste.val": (("rule_paste", "val"), _parse_pair, _unit_pair("rule.paste.val"), _fmt_pair),
    "rule.paste.priority": (("rule_paste", "priority"), _parse_int, _identity, str),
    "rule.void.hue": (("rule_void", "hue"), _parse_pair, _identity, _fmt_pair),
    "rule.void.sat": (("rule_void", "sat"), _parse_pair, _unit_pair("rule.void.sat"), _fmt_pair),
    "rule.void.val": (("rule_void", "val"), _parse_pair, _unit_pair("rule.void.val"), _fmt_pair),
    "rule.void.priority": (("rule_void", "priority"), _parse_int, _identity, str),
    "train.iterations": ("train_iterations", _parse_int, _at_least("train.iterations", 1), str),
    "train.batch": ("train_batch", _parse_int, _at_least("train.batch", 1), str),
    "train.crop": ("train_crop", _parse_int, _at_least("train.crop", 16), str),
    "train.learning_rate": ("train_learning_rate", _parse_float, _at_least("train.learning_rate", 0), "{:g}".format),
    "train.momentum": ("train_momentum", _parse_float, _identity, "{:g}".format),
    "train.weight_ce": ("train_weight_ce", _parse_float, _at_least("train.weight_ce", 0), "{:g}".format),
    "train.weight_lovasz": ("train_weight_lovasz", _parse_float, _at_least("train.weight_lovasz", 0), "{:g}".format),
    "train.seed": ("train_seed", _parse_int, _identity, str),
    "train.snapshot_period": ("train_snapshot_period", _parse_int, _at_least("train.snapshot_period", 1), str),
    "train.threads": ("train_threads", _parse_int, _at_least("train.threads", 1), str),
    "predict.tile": ("predict_tile", _parse_int, _at_least("predict.tile", 16), str),
    "predict.overlap": ("predict_overlap", _parse_int, _at_least("predict.overlap", 0), str),
    "traverse.spacing_um": ("traverse_spacing_um", _parse_float, _positive("traverse.spacing_um"), "{:g}".format),
    "traverse.include_border_chords": ("traverse_include_border", _parse_bool, _identity, _fmt_bool),
    "io.out_dir": ("out_dir", str.strip, _identity, str),
    "service.port": ("service_port", _parse_int, _at_least("service.port", 0), str),
}


def parse_config(text: str, source: str = "<config>") -> ToolConfig:
    config = ToolConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        seen.add(key)
        attr, parser, validator, _ = _KEYS[key]
        parsed = validator(parser(value))
        if isinstance(attr, tuple):
            rule_attr, field_name = attr
            rule = replace(getattr(config, rule_attr), **{field_name: parsed})
            config = replace(config, **{rule_attr: rule})
        else:
            config = replace(config, **{attr: parsed})
    _validate(config)
    return config


def _validate(config: ToolConfig) -> None:
    if not 0 <= config.train_momentum < 1:
        raise ConfigError(f"train.momentum must be in [0, 1), got {config.train_momentum}")
    if config.train_weight_ce == 0 and config.train_weight_lovasz == 0:
        raise ConfigError("train.weight_ce and train.weight_lovasz cannot both be zero")
    if config.predict_tile <= 2 * config.predict_overlap:
        raise ConfigError("predict.tile must exceed twice predict.overlap")
    if config.predict_tile % 4 or config.train_crop % 4:
        raise ConfigError("predict.tile and train.crop must be multiples of 4")
    if config.service_port > 65535:
        raise ConfigError(f"service.port must be <= 65535, got {config.service_port}")
    config.color_rules()
    config.area_filters()


def load_config(path=None) -> ToolConfig:
    """Config from a file, or all defaults when no path is given."""
    if path is None:
        return ToolConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    return parse_config(text, source=str(path))


def config_text(config: ToolConfig) -> str:
    """Render a config as a parseable file with every key present."""
    lines = ["# petroseg configuration (all keys shown with their current values)"]
    for key, (attr, _, _, fmt) in _KEYS.items():
        if isinstance(attr, tuple):
            value = getattr(getattr(config, attr[0]), attr[1])
        else:
            value = getattr(config, attr)
        lines.append(f"{key} = {fmt(value)}")
    return "\n".join(lines) + "\n"

"""Color-threshold baseline segmentation and connected-component noise filtering.

The baseline expects a color-treated scan: phenolphthalein turns the
alkaline cement paste pink, and the voids are filled with orange chalk
powder, so paste and voids separate in HSV space while the untreated
aggregate stays comparatively gray.  Pixels are classified per-pixel by
configurable HSV interval rules; anything unmatched falls back to
aggregate.  Sub-threshold components are then relabeled as noise.

The default rule thresholds are tuned for the synthetic phantom suite.
Real samples need recalibration every time the dye treatment changes;
that sensitivity is the known weakness of the method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .raster import PhaseLabel, PhaseMask, Rect, Scan


@dataclass(frozen=True)
class ColorRule:
    """An HSV interval rule assigning one phase.

    Hue is in degrees and the interval may wrap around 360 (min > max
    means the interval crosses 0).  Saturation and value are in [0, 1].
    Lower priority wins when several rules match a pixel.
    """

    phase: PhaseLabel
    hue: tuple[float, float]
    sat: tuple[float, float]
    val: tuple[float, float]
    priority: int

    def __post_init__(self):
        if self.sat[0] > self.sat[1]:
            raise ConfigError(f"rule {self.phase.name.lower()}: sat min > max")
        if self.val[0] > self.val[1]:
            raise ConfigError(f"rule {self.phase.name.lower()}: val min > max")


@dataclass(frozen=True)
class AreaFilterSpec:
    """Relabel components of a phase below a minimum area.

    Comparison is strict: components with area < ``min_area_um2`` are
    reassigned to ``target``.
    """

    phase: PhaseLabel
    min_area_um2: float
    target: PhaseLabel
    connectivity: int = 8

    def __post_init__(self):
        if self.min_area_um2 < 0:
            raise ConfigError("area filter threshold must be >= 0")
        if self.target == self.phase:
            raise ConfigError("area filter target must differ from the filtered phase")
        if self.connectivity not in (4, 8):
            raise ConfigError(f"connectivity must be 4 or 8, got {self.connectivity}")


@dataclass(frozen=True)
class Component:
    """One maximal connected set of same-phase pixels."""

    phase: PhaseLabel
    count: int
    area_um2: float
    rect: Rect
    seed: tuple[int, int]  # (x, y) of the first pixel in row-major order


DEFAULT_RULES = (
    ColorRule(PhaseLabel.VOID, hue=(20.0, 45.0), sat=(0.30, 1.0), val=(0.0, 1.0), priority=0),
    ColorRule(PhaseLabel.PASTE, hue=(300.0, 350.0), sat=(0.15, 1.0), val=(0.0, 1.0), priority=1),
)

DEFAULT_AGGREGATE_MIN_UM2 = 10000.0
DEFAULT_VOID_MIN_UM2 = 100.0


def default_area_filters(
    aggregate_min_um2: float = DEFAULT_AGGREGATE_MIN_UM2,
    void_min_um2: float = DEFAULT_VOID_MIN_UM2,
    target: PhaseLabel = PhaseLabel.PASTE,
    connectivity: int = 8,
) -> tuple[AreaFilterSpec, ...]:
    return (
        AreaFilterSpec(PhaseLabel.AGGREGATE, aggregate_min_um2, target, connectivity),
        AreaFilterSpec(PhaseLabel.VOID, void_min_um2, target, connectivity),
    )


def rgb_to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standard hexcone HSV from (H, W, 3) uint8 RGB.

    Returns hue in degrees [0, 360), saturation and value in [0, 1].
    Achromatic pixels (max == min) get hue 0 and saturation 0 so gray
    never matches a chromatic rule.
    """
    rgbf = rgb.astype(np.float64) / 255.0
    r, g, b = rgbf[..., 0], rgbf[..., 1], rgbf[..., 2]
    v = rgbf.max(axis=-1)
    c = v - rgbf.min(axis=-1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    chromatic = c > 0
    cs = np.where(chromatic, c, 1.0)
    h = np.zeros_like(v)
    m = chromatic & (v == r)
    h[m] = ((g - b)[m] / cs[m]) % 6.0
    m = chromatic & (v == g) & (v != r)
    h[m] = (b - r)[m] / cs[m] + 2.0
    m = chromatic & (v == b) & (v != r) & (v != g)
    h[m] = (r - g)[m] / cs[m] + 4.0
    h *= 60.0
    return h, s, v


def _hue_match(h: np.ndarray, lo: float, hi: float) -> np.ndarray:
    lo, hi = lo % 360.0, hi % 360.0
    if lo <= hi:
        return (h >= lo) & (h <= hi)
    return (h >= lo) | (h <= hi)  # interval wraps through 0


def _hue_overlaps(a: tuple[float, float], b: tuple[float, float]) -> bool:
    def segments(lo, hi):
        lo, hi = lo % 360.0, hi % 360.0
        return [(lo, hi)] if lo <= hi else [(lo, 360.0), (0.0, hi)]

    return any(s1 <= e2 and s2 <= e1 for s1, e1 in segments(*a) for s2, e2 in segments(*b))


def _validate_rules(rules) -> list[ColorRule]:
    rules = list(rules)
    if not rules:
        raise ConfigError("no color rules configured")
    phases = {r.phase for r in rules}
    for needed in (PhaseLabel.VOID, PhaseLabel.PASTE):
        if needed not in phases:
            raise ConfigError(f"color rules must cover {needed.name.lower()}")
    for i, a in enumerate(rules):
        for b in rules[i + 1 :]:
            if (
                a.priority == b.priority
                and _hue_overlaps(a.hue, b.hue)
                and a.sat[0] <= b.sat[1]
                and b.sat[0] <= a.sat[1]
                and a.val[0] <= b.val[1]
                and b.val[0] <= a.val[1]
            ):
                raise ConfigError(
                    f"rules for {a.phase.name.lower()} and {b.phase.name.lower()} share priority "
                    f"{a.priority} with overlapping ranges"
                )
    return sorted(rules, key=lambda r: r.priority)


def segment_by_color(scan: Scan, rules=DEFAULT_RULES) -> PhaseMask:
    """Classify each pixel by the matching rule of lowest priority.

    Unmatched pixels become aggregate.  Classification is purely
    per-pixel; there is no spatial coupling.
    """
    ordered = _validate_rules(rules)
    h, s, v = rgb_to_hsv(scan.pixels)
    labels = np.full(scan.pixels.shape[:2], int(PhaseLabel.AGGREGATE), dtype=np.uint8)
    assigned = np.zeros(labels.shape, dtype=bool)
    for rule in ordered:
        match = (
            ~assigned
            & _hue_match(h, *rule.hue)
            & (s >= rule.sat[0])
            & (s <= rule.sat[1])
            & (v >= rule.val[0])
            & (v <= rule.val[1])
        )
        labels[match] = int(rule.phase)
        assigned |= match
    return PhaseMask(pitch_um=scan.pitch_um, labels=labels)


_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


def connected_components(mask: PhaseMask, phase: PhaseLabel, connectivity: int = 8) -> list[Component]:
    """Maximal connected sets of one phase, ordered by row-major seed pixel."""
    if connectivity not in _STRUCTURES:
        raise ConfigError(f"connectivity must be 4 or 8, got {connectivity}")
    binary = mask.labels == int(phase)
    labeled, n = ndimage.label(binary, structure=_STRUCTURES[connectivity])
    if n == 0:
        return []
    flat = labeled.ravel()
    counts = np.bincount(flat, minlength=n + 1)
    ids, first = np.unique(flat, return_index=True)  # first occurrence = row-major seed
    seed_of = dict(zip(ids.tolist(), first.tolist()))
    slices = ndimage.find_objects(labeled)
    width = mask.width
    pitch2 = mask.pitch_um * mask.pitch_um
    comps = []
    for comp_id in range(1, n + 1):
        sy, sx = slices[comp_id - 1]
        seed_flat = seed_of[comp_id]
        comps.append(
            Component(
                phase=phase,
                count=int(counts[comp_id]),
                area_um2=int(counts[comp_id]) * pitch2,
                rect=Rect(sx.start, sy.start, sx.stop - sx.start, sy.stop - sy.start),
                seed=(seed_flat % width, seed_flat // width),
            )
        )
    comps.sort(key=lambda c: c.seed[1] * width + c.seed[0])
    return comps


def filter_small_components(mask: PhaseMask, specs) -> PhaseMask:
    """Relabel sub-threshold components of the filtered phases.

    All components are measured on the input mask and relabeled in one
    pass, so applying the filter twice is a no-op.  Phases without a spec
    entry are never touched.
    """
    out = np.array(mask.labels, copy=True)
    pitch2 = mask.pitch_um * mask.pitch_um
    for spec in specs:
        binary = mask.labels == int(spec.phase)
        labeled, n = ndimage.label(binary, structure=_STRUCTURES[spec.connectivity])
        if n == 0:
            continue
        counts = np.bincount(labeled.ravel(), minlength=n + 1)
        small = counts * pitch2 < spec.min_area_um2
        small[0] = False  # background id
        if small.any():
            out[small[labeled]] = int(spec.target)
    return PhaseMask(pitch_um=mask.pitch_um, labels=out)

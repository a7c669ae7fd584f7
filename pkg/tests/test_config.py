import pytest

from petroseg.config import ToolConfig, config_text, load_config, parse_config
from petroseg.errors import ConfigError
from petroseg.raster import PhaseLabel


def test_defaults_round_trip():
    default = ToolConfig()
    assert parse_config(config_text(default)) == default


def test_default_values():
    config = ToolConfig()
    assert config.pitch_um == 5.3
    assert (config.grid_rows, config.grid_cols) == (100, 100)
    assert config.filter_aggregate_min_um2 == 10000.0
    assert config.filter_void_min_um2 == 100.0
    assert config.train_iterations == 2000
    assert (config.train_batch, config.train_crop) == (4, 128)
    assert (config.train_learning_rate, config.train_momentum) == (0.05, 0.9)
    assert (config.train_weight_ce, config.train_weight_lovasz) == (0.5, 0.5)


def test_overrides_and_comments():
    config = parse_config(
        """
        # comment line
        pitch_um = 2.5   # trailing comment
        grid.rows = 20
        rule.paste.hue = 310,340
        traverse.include_border_chords = false
        """
    )
    assert config.pitch_um == 2.5
    assert config.grid_rows == 20
    assert config.rule_paste.hue == (310.0, 340.0)
    assert config.traverse_include_border is False


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="grid.rowz"):
        parse_config("grid.rowz = 10")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("pitch_um = 1\npitch_um = 2")


def test_bad_number_rejected():
    with pytest.raises(ConfigError, match="expected a number"):
        parse_config("pitch_um = abc")


def test_range_validation():
    with pytest.raises(ConfigError, match="pitch_um must be positive"):
        parse_config("pitch_um = -1")
    with pytest.raises(ConfigError, match="momentum"):
        parse_config("train.momentum = 1.5")
    with pytest.raises(ConfigError, match="twice"):
        parse_config("predict.tile = 64\npredict.overlap = 32")
    with pytest.raises(ConfigError, match="both"):
        parse_config("train.weight_ce = 0\ntrain.weight_lovasz = 0")


def test_phase_parsing():
    config = parse_config("filter.void_target = aggregate")
    assert config.filter_void_target == PhaseLabel.AGGREGATE
    with pytest.raises(ConfigError, match="aggregate/paste/void"):
        parse_config("filter.void_target = air")
    # a target equal to its filtered phase is caught at load
    with pytest.raises(ConfigError, match="differ"):
        parse_config("filter.void_target = void")


def test_rules_and_filters_constructed():
    config = ToolConfig()
    rules = config.color_rules()
    assert {r.phase for r in rules} == {PhaseLabel.PASTE, PhaseLabel.VOID}
    filters = config.area_filters()
    assert {f.phase for f in filters} == {PhaseLabel.AGGREGATE, PhaseLabel.VOID}


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.conf")


def test_file_loading(tmp_path):
    path = tmp_path / "x.conf"
    path.write_text("grid.rows = 7\n")
    assert load_config(path).grid_rows == 7
    assert load_config(None) == ToolConfig()

import pytest

from gansentinel.config import ConfigError, apply_overrides, format_config, parse_config_text
from gansentinel.loss_patterns import DetectorConfig


def test_parse_types_and_comments():
    text = """
    # detector
    window = 30
    slope-threshold = 0.005   # inline
    gate_on_constancy = true
    extractor = "pixel-downsample"
    num_scales = auto
    """
    assert parse_config_text(text) == {
        "window": 30, "slope_threshold": 0.005, "gate_on_constancy": True,
        "extractor": "pixel-downsample", "num_scales": "auto",
    }


def test_bad_lines():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("just words")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("a = 1\na = 2")


def test_detector_config_round_trip(tmp_path):
    cfg = DetectorConfig(window=40, jump_threshold=0.7)
    path = tmp_path / "det.conf"
    path.write_text(cfg.to_text())
    assert DetectorConfig.from_file(path) == cfg


def test_overrides_strict_and_lenient():
    cfg = DetectorConfig()
    assert apply_overrides(cfg, {"osc_min_amp": 1}).osc_min_amp == 1.0
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"nope": 1})
    assert apply_overrides(cfg, {"nope": 1}, strict=False) == cfg


def test_format_is_parseable():
    values = {"a": 1, "b": 0.25, "c": "x y", "d": False}
    assert parse_config_text(format_config(values)) == values

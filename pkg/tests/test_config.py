import json

import pytest

from scenemap.config import (
    DEFAULTS,
    apm_config_of,
    apply_override,
    denoiser_config_of,
    grammar_of,
    load_config,
    output_root,
    palette_of,
)
from scenemap.errors import ConfigError


def test_defaults_are_desk():
    cfg = load_config()
    assert cfg["preset"] == "desk" and cfg["data"]["canvas"] == [32, 32]
    assert denoiser_config_of(cfg).T == 100
    assert palette_of(cfg).K == 12
    assert apm_config_of(cfg).grid == 8
    assert grammar_of(cfg).scale == 0.15


def test_precedence(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"denoiser": {"steps": 7, "lr": 0.5}}))
    cfg = load_config(tmp_path / "c.json", ["denoiser.lr=0.25", "generate.condition=\"floor\""])
    assert cfg["denoiser"]["steps"] == 7 and cfg["denoiser"]["lr"] == 0.25
    assert cfg["generate"]["condition"] == "floor"
    assert DEFAULTS["denoiser"]["steps"] != 7  # defaults untouched


def test_presets():
    cfg = load_config(preset="paper")
    assert palette_of(cfg).K == 38 and cfg["data"]["canvas"] == [64, 64]
    assert load_config(preset="desk64")["denoiser"]["radius"] == 3


def test_override_parsing():
    cfg = load_config()
    apply_override(cfg, "generate.split=test")
    apply_override(cfg, "data.canvas=[16, 16]")
    assert cfg["generate"]["split"] == "test" and cfg["data"]["canvas"] == [16, 16]


@pytest.mark.parametrize("override", ["denoiser.lrr=1", "nosection.x=1", "denoiser"])
def test_bad_overrides(override):
    with pytest.raises(ConfigError):
        load_config(overrides=[override])


def test_bad_files_and_values(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    (tmp_path / "extra.json").write_text(json.dumps({"gpu": {}}))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "extra.json")
    with pytest.raises(ConfigError):
        load_config(preset="huge")
    with pytest.raises(ConfigError):
        load_config(overrides=["generate.condition=\"ceiling\""])
    with pytest.raises(ConfigError):
        load_config(overrides=["data.n_scenes=0"])


def test_output_root(monkeypatch, tmp_path):
    monkeypatch.setenv("SCENEMAP_OUTPUT_ROOT", str(tmp_path))
    assert output_root() == tmp_path
    assert output_root(tmp_path / "x") == tmp_path / "x"

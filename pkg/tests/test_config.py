import json

import pytest

from kmpgait.config import CONFIG_ENV_VAR, ConfigError, PipelineConfig, from_dict, load_config, to_dict
from kmpgait.env import SymmetryMode
from kmpgait.synthesis import GaitSpec


def test_defaults():
    cfg = load_config()
    assert isinstance(cfg, PipelineConfig)
    assert cfg.ppo.steps_per_epoch == 3000 and cfg.ppo.gamma == 0.994
    assert cfg.extraction.n_components == 4 and cfg.extraction.trim_fraction == 0.15
    assert cfg.stream.rate_hz == 50.0
    assert set(cfg.synthesis.gaits) == {"trot", "walk", "bound", "gallop"}


def test_file_and_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"ppo": {"epochs": 12}, "environment": {"symmetry": "full8"}}))
    cfg = load_config(p, {"ppo.lr_actor": 3e-4, "stream.port": 0})
    assert cfg.ppo.epochs == 12 and cfg.ppo.lr_actor == 3e-4
    assert cfg.environment.symmetry is SymmetryMode.FULL8
    assert cfg.stream.port == 0


def test_env_var(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"ppo": {"epochs": 7}}))
    monkeypatch.setenv(CONFIG_ENV_VAR, str(p))
    assert load_config().ppo.epochs == 7


def test_custom_gait_merged():
    cfg = from_dict({"synthesis": {"gaits": {"pace": {"offsets": [0, 0.5, 0, 0.5]}}, "source_gait": "trot"}})
    assert cfg.synthesis.gaits["pace"] == GaitSpec((0.0, 0.5, 0.0, 0.5))
    assert "walk" in cfg.synthesis.gaits


@pytest.mark.parametrize(
    "data, match",
    [
        ({"bogus": {}}, "unknown section"),
        ({"ppo": {"epoch": 3}}, "ppo.epoch: unknown key"),
        ({"ppo": {"epochs": "ten"}}, "ppo.epochs"),
        ({"ppo": {"epochs": 2.5}}, "integer"),
        ({"ppo": {"gamma": 2.0}}, "gamma"),
        ({"extraction": {"reference_channel": "tail"}}, "reference_channel"),
        ({"synthesis": {"gaits": {"x": {"offsets": [0, 0, 0, 1.2]}}}}, "gait 'x'"),
        ({"synthesis": {"source_gait": "pace"}}, "source_gait"),
        ({"stream": {"port": 70000}}, "port"),
        ({"environment": {"symmetry": "sideways"}}, "symmetry"),
    ],
)
def test_validation_errors(data, match):
    with pytest.raises(ConfigError, match=match):
        from_dict(data)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.json")
    p = tmp_path / "bad.json"
    p.write_text("{\n  oops")
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)
    with pytest.raises(ConfigError, match="section.key"):
        load_config(None, {"epochs": 3})


def test_to_dict_roundtrip():
    cfg = load_config(None, {"ppo.epochs": 5, "extraction.n_samples": 80})
    again = from_dict(json.loads(json.dumps(to_dict(cfg))))
    assert to_dict(again) == to_dict(cfg)

import json

import pytest

from imudiff.config import DEFAULTS, ConfigError, config_hash, deep_merge, load_config, resolve_paths


def test_defaults_validate():
    cfg = load_config()
    assert cfg["train"]["steps"] == DEFAULTS["train"]["steps"]
    fast = load_config(profile="fast")
    assert fast["train"]["steps"] < cfg["train"]["steps"]
    assert fast["schedule"] == {"preset": "test"}


def test_file_and_seed_override(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"train": {"steps": 5}, "seed": 3}))
    cfg = load_config(p, seed=9)
    assert cfg["train"]["steps"] == 5 and cfg["train"]["lr"] == DEFAULTS["train"]["lr"]
    assert cfg["seed"] == 9


@pytest.mark.parametrize("bad", [
    {"train": {"steps": -1}},
    {"train": {"batch": 0}},
    {"train": {"stepz": 10}},
    {"loss_weights": {"lambda_acc": -1}},
    {"corpus": {"min_seconds": 9, "max_seconds": 3}},
    {"eval": {"classifier": "svm"}},
    [1, 2],
])
def test_invalid_configs(tmp_path, bad):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(ConfigError):
        load_config(p)


def test_unreadable_configs(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        load_config(profile="turbo")


def test_schedule_replaced_not_merged():
    merged = deep_merge({"schedule": {"preset": "desk"}}, {"schedule": {"T": 10, "beta_start": 1e-4, "beta_end": 0.02}})
    assert "preset" not in merged["schedule"]


def test_hash_is_stable_and_sensitive():
    a, b = load_config(), load_config()
    assert config_hash(a) == config_hash(b)
    b["seed"] = 1
    assert config_hash(a) != config_hash(b)


def test_paths_relative_to_out_and_env(tmp_path, monkeypatch):
    cfg = load_config()
    assert resolve_paths(cfg, tmp_path)["corpus"] == tmp_path / "corpus"
    monkeypatch.setenv("IMUDIFF_CORPUS", "/data/c")
    assert str(resolve_paths(cfg, tmp_path)["corpus"]) == "/data/c"

import json

import pytest

from trajfair.config import AuditConfig
from trajfair.errors import ConfigError


def test_defaults():
    c = AuditConfig()
    assert (c.granularity, c.epsilon, c.tau, c.ssim_window) == (100.0, 0.8, 0.2, 7)
    assert c.sweep == (50.0, 100.0, 300.0, 500.0, 700.0, 900.0)
    assert c.entropy_params().he_log_scale and not c.ssim_params().log_scale
    assert c.ssim_params(3).window == 3


@pytest.mark.parametrize("bad", [
    {"epsilon": 1.0}, {"tau": 0.0}, {"granularity": -1}, {"sweep": [100, 0]}, {"ssim_window": 8},
    {"ssim_mode": "global"}, {"gfs_mode": "ratio"}, {"k_min": 1}, {"k_min": 5, "k_max": 3}, {"k": 1},
    {"resample_interval": 0}, {"fuzzy_m": 0}, {"he_r_factor": 0}, {"colour": "red"},
])
def test_rejects(bad):
    with pytest.raises(ConfigError):
        AuditConfig.from_dict(bad)


def test_load_and_override(tmp_path, monkeypatch):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"epsilon": 0.7, "sweep": [100, 300]}))
    c = AuditConfig.load(path, tau=0.3, epsilon=None)
    assert (c.epsilon, c.tau, c.sweep) == (0.7, 0.3, (100.0, 300.0))
    monkeypatch.setenv("TRAJFAIR_CONFIG", str(path))
    assert AuditConfig.load().epsilon == 0.7
    assert AuditConfig.from_dict(c.to_dict()) == c


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        AuditConfig.load(tmp_path / "missing.json")
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        AuditConfig.load(tmp_path / "list.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        AuditConfig.load(tmp_path / "broken.json")

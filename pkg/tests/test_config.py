import json

import pytest

from cranmm.config import (ConfigError, SolverSettings, SystemConfig, config_hash, dbm_to_watt,
                           load_config, thermal_noise_dbm, watt_to_dbm)


def test_defaults_valid():
    cfg = SystemConfig().validate()
    assert cfg.N_U == (2, 2, 2, 2) and cfg.N_H == (2, 2, 2, 2)
    assert cfg.weights == (1.0,) * 4
    assert cfg.n_h_total == 8


def test_dbm_roundtrip():
    assert dbm_to_watt(30) == pytest.approx(1.0)
    assert dbm_to_watt(20) == pytest.approx(0.1)
    assert watt_to_dbm(dbm_to_watt(7.5)) == pytest.approx(7.5)


def test_thermal_noise():
    assert thermal_noise_dbm(20e6, 5.0) == pytest.approx(-174 + 73.0103 + 5, abs=1e-4)


@pytest.mark.parametrize("bad", [
    dict(K=0), dict(P_UE=0.0), dict(P_H_max=-1.0), dict(N_U=[2, 2]), dict(weights=[1, 1, 1, 0]),
    dict(antenna_spacing_ratio=0.0), dict(N_C=0),
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        SystemConfig(**bad).validate()


@pytest.mark.parametrize("bad", [dict(max_iters=0), dict(rel_tol=0.0), dict(psd_floor=-1.0)])
def test_invalid_solver_settings(bad):
    with pytest.raises(ConfigError):
        SolverSettings(**bad).validate()


def test_dict_roundtrip_and_hash():
    cfg = SystemConfig(K=2, L=3, N_H=[1, 2, 3], seed=9)
    back = SystemConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)
    assert config_hash(cfg.with_updates(seed=10)) != config_hash(cfg)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        SystemConfig.from_dict({"K": 2, "bogus": 1})


def test_schema_rejects_wrong_type():
    with pytest.raises(ConfigError):
        SystemConfig.from_dict({"K": "four"})


def test_load_json_and_yaml(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"K": 2, "L": 2, "N_C": 16, "solver": {"max_iters": 5}}))
    (tmp_path / "c.yaml").write_text("K: 2\nL: 2\nN_C: 16\nsolver:\n  max_iters: 5\n")
    a, b = load_config(tmp_path / "c.json"), load_config(tmp_path / "c.yaml")
    assert a == b
    assert a.solver.max_iters == 5 and a.N_U == (2, 2)

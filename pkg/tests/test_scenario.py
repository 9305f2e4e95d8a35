import json

import pytest

from terradeploy.scenario import ConfigError, db_to_lin, dbm_to_w, load_scenario, scenario_from_dict

BASE = {
    "terrain": {"base": 100.0, "components": [{"h": 50, "mux": 10, "muy": 20, "sigx": 30, "sigy": 40}]},
    "targets": [{"pos": [1, 2, 3], "channels": {"start": 105, "stop": 145, "step": 10}, "tx_power_dbm": 20}],
    "uav_bands": [[100, 250], [200, 350]],
    "ebd": {"K": 500, "P_fa": 0.01, "L": 4},
    "antenna": {"alpha_a_deg": 10, "alpha_e_deg": 20},
    "link": {"beta0_db": -20, "Nt": 7, "noise_dbm": -80},
    "bounds": {"region": [0, 1000, 0, 2000], "Smin_m": 100, "Rmin_m": 50, "Hsafe_m": 40, "Hmax_m": 900},
    "weights": {"lambda_S": 1.0, "lambda_E": 0.0, "lambda_pen": 10.0},
}


def test_db_conversions():
    assert db_to_lin(-20) == pytest.approx(0.01, rel=1e-15)
    assert dbm_to_w(20) == pytest.approx(0.1, rel=1e-15)
    assert dbm_to_w(-80) == pytest.approx(1e-11, rel=1e-15)


def test_load_dict():
    sc = scenario_from_dict(BASE)
    assert sc.M == 2 and sc.N == 1
    assert sc.targets[0].channels == (105.0, 115.0, 125.0, 135.0, 145.0)
    assert sc.targets[0].tx_power == pytest.approx(0.1)
    assert sc.link.beta_0 == pytest.approx(0.01) and sc.link.sigma_n2 == pytest.approx(1e-11)
    assert sc.ebd.K == 500 and sc.ebd.P_fa == 0.01
    assert sc.bounds.region == (0.0, 1000.0, 0.0, 2000.0) and sc.bounds.H_max == 900.0
    assert sc.energy.H_safe == 40.0
    assert sc.terrain.base == 100.0 and sc.terrain.n_components == 1
    assert sc.with_uavs(1).M == 1


def test_terrain_from_file(tmp_path):
    (tmp_path / "t.json").write_text(json.dumps(BASE["terrain"]))
    d = dict(BASE, terrain="t.json")
    (tmp_path / "s.json").write_text(json.dumps(d))
    assert load_scenario(tmp_path / "s.json").terrain.base == 100.0


@pytest.mark.parametrize("patch", [
    {"targets": []},
    {"uav_bands": [[300, 200]]},
    {"bounds": {"region": [0, 0, 0, 1]}},
    {"ebd": {"P_fa": 2.0}},
    {"terrain": "missing.json"},
    {"energy_term": "peak"},
])
def test_bad_scenarios(patch):
    with pytest.raises(ConfigError):
        scenario_from_dict({**BASE, **patch})


def test_missing_keys_and_files(tmp_path):
    d = dict(BASE)
    del d["bounds"]
    with pytest.raises(ConfigError):
        scenario_from_dict(d)
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "bad.json")


def test_too_many_uavs():
    with pytest.raises(ConfigError):
        scenario_from_dict(BASE).with_uavs(3)

"""Scenario parsing and validation."""

import glob
import json
import os

import numpy as np
import pytest

from otfs_isac.exceptions import ConfigValidationError
from otfs_isac.scenario import (EXPERIMENT_KINDS, EstimatorSettings, Scenario,
                                load_scenario, scenario_from_dict)

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "scenarios")


def minimal_raw(**overrides):
    raw = {
        "name": "unit",
        "experiment_kind": "dd-correlation",
        "system": {"n_doppler": 8, "m_delay": 16, "n_tx": 2, "n_rx": 8},
        "targets": [{"angle_deg": 5.0, "range_m": 50.0, "velocity_mps": 10.0}],
        "allocation": {"diagonal_private_bins": 2},
        "trials": 3,
        "snr_db_values": [10.0],
        "seed": 1,
    }
    raw.update(overrides)
    return raw


def test_minimal_scenario_parses():
    sc = scenario_from_dict(minimal_raw())
    assert isinstance(sc, Scenario)
    assert sc.kind == "dd-correlation"
    assert sc.config.n_doppler == 8
    assert len(sc.targets) == 1
    assert sc.targets[0].angle_rad == pytest.approx(np.deg2rad(5.0))
    assert sc.snr_db_values == (10.0,)
    assert isinstance(sc.estimator, EstimatorSettings)


def test_to_dict_is_json_serializable_and_round_trips():
    sc = scenario_from_dict(minimal_raw())
    d = sc.to_dict()
    json.dumps(d)  # must not raise
    sc2 = scenario_from_dict(d)
    assert (sc2.config.n_doppler, sc2.config.m_delay) == (8, 16)
    assert sc2.config.g_t == pytest.approx(sc.config.g_t)
    assert sc2.config.g_r == pytest.approx(sc.config.g_r)
    assert sc2.allocation == sc.allocation
    assert sc2.targets[0].delay_s == pytest.approx(sc.targets[0].delay_s)


def test_explicit_private_bins():
    raw = minimal_raw(allocation={"private_bins": [[0, [0, 3]], [1, [2, 5]]]})
    sc = scenario_from_dict(raw)
    assert sc.allocation.private_bins[0] == frozenset({(0, 3)})
    assert sc.allocation.private_bins[1] == frozenset({(2, 5)})


def test_all_errors_collected():
    raw = {
        "experiment_kind": "nope",
        "system": {"n_tx": "x", "bogus_field": 1},
        "targets": [{"angle_deg": 5.0}],
        "allocation": {},
        "trials": 0,
        "seed": -1,
        "snr_db_values": [],
    }
    with pytest.raises(ConfigValidationError) as exc:
        scenario_from_dict(raw)
    messages = "\n".join(exc.value.errors)
    assert len(exc.value.errors) >= 6
    assert "experiment_kind" in messages
    assert "system.n_tx" in messages
    assert "system.bogus_field" in messages
    assert "targets[0]" in messages
    assert "trials" in messages
    assert "seed" in messages


def test_bin_outside_grid_rejected():
    raw = minimal_raw(allocation={"private_bins": [[0, [0, 99]], [1, [1, 1]]]})
    with pytest.raises(ConfigValidationError) as exc:
        scenario_from_dict(raw)
    assert any("outside" in e for e in exc.value.errors)


def test_kind_specific_target_requirements():
    with pytest.raises(ConfigValidationError):
        scenario_from_dict(minimal_raw(targets=[]))
    ok = minimal_raw(experiment_kind="coarse-angle-mse", targets=[])
    assert scenario_from_dict(ok).kind == "coarse-angle-mse"
    bad = minimal_raw(experiment_kind="ssr-velocity",
                      targets=[{"angle_deg": 1, "range_m": 1, "velocity_mps": 1},
                               {"angle_deg": 2, "range_m": 2, "velocity_mps": 2}])
    with pytest.raises(ConfigValidationError):
        scenario_from_dict(bad)


def test_unknown_estimator_field_rejected():
    raw = minimal_raw(estimator={"warp_factor": 9})
    with pytest.raises(ConfigValidationError) as exc:
        scenario_from_dict(raw)
    assert any("estimator.warp_factor" in e for e in exc.value.errors)


def test_invalid_aggregate_rejected():
    raw = minimal_raw(estimator={"ssr_aggregate": "median"})
    with pytest.raises(ConfigValidationError):
        scenario_from_dict(raw)


def test_load_scenario_invalid_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigValidationError):
        load_scenario(p)


def test_all_shipped_scenarios_validate():
    paths = sorted(glob.glob(os.path.join(SCENARIO_DIR, "*.json")))
    assert paths, "no shipped scenario files found"
    for path in paths:
        sc = load_scenario(path)
        assert sc.kind in EXPERIMENT_KINDS

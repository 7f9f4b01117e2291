import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nomaisac.scenario import (
    ChannelSet,
    ConfigError,
    RunConfig,
    ScenarioConfig,
    SolverConfig,
    SweepSpec,
    config_from_dict,
    dbm_to_watts,
    generate_channels,
    load_config,
    validate_config,
    watts_to_dbm,
)

from conftest import PAPER_CONFIG


@pytest.mark.parametrize("dbm, watts", [(20, 0.1), (-80, 1e-11), (0, 1e-3)])
def test_dbm_to_watts(dbm, watts):
    assert math.isclose(dbm_to_watts(dbm), watts, rel_tol=1e-12)


@given(st.floats(min_value=-200, max_value=100))
def test_dbm_round_trip(x):
    assert math.isclose(watts_to_dbm(dbm_to_watts(x)), x, abs_tol=1e-9)


def test_default_scenario_is_valid():
    cfg = ScenarioConfig()
    assert validate_config(cfg) is cfg
    assert (cfg.n_antennas, cfg.n_users, cfg.n_virtual_beams) == (8, 5, 1)
    assert cfg.target_directions == (-60.0, 0.0, 60.0)
    assert math.isclose(cfg.tx_power, 0.1)
    assert math.isclose(cfg.noise_power, 1e-11)
    assert math.isclose(cfg.sinr_targets()[0], 2 ** 4.5 - 1)


def test_shipped_config_matches_defaults():
    rc = load_config(PAPER_CONFIG)
    assert rc.scenario == ScenarioConfig()
    assert rc.solver == SolverConfig()
    assert rc.sweep == SweepSpec()


def test_rho_factor_out_of_range():
    with pytest.raises(ConfigError) as exc:
        validate_config(SolverConfig(rho_factor=1.5))
    assert "rho_factor out of (0,1)" in exc.value.violations


def test_zero_users_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config(ScenarioConfig(n_users=0))
    assert "n_users must be ≥ 1" in exc.value.violations


def test_all_violations_reported_together():
    data = {"scenario": {"n_users": 0, "beam_width": -1}, "solver": {"rho_factor": 2.0}}
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert len(exc.value.violations) == 3


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict({"scenario": {"n_antenna": 8}})


def test_bad_sweep():
    with pytest.raises(ConfigError) as exc:
        validate_config(SweepSpec(r_min_values=(2.0, 1.0), schemes=("foo",), n_realizations=0))
    assert len(exc.value.violations) == 3


def test_config_dict_round_trip():
    rc = RunConfig()
    assert config_from_dict(json.loads(json.dumps(rc.to_dict()))) == rc


def test_per_user_rates():
    cfg = ScenarioConfig(n_users=2, min_rate_bits=(1.0, 2.0))
    assert np.allclose(cfg.sinr_targets(), [1.0, 3.0])
    with pytest.raises(ConfigError):
        validate_config(ScenarioConfig(n_users=3, min_rate_bits=(1.0, 2.0)))


@pytest.mark.parametrize("pathloss, variance", [(80.0, 1e-8), (0.0, 1.0)])
def test_channel_second_moment(pathloss, variance):
    cfg = ScenarioConfig(n_users=100, n_antennas=1000, pathloss_db=pathloss)
    ch = generate_channels(cfg, seed=3, realization_index=0)
    assert ch.h.size == 10 ** 5
    assert abs(np.mean(np.abs(ch.h) ** 2) / variance - 1) < 0.02


def test_channels_deterministic():
    cfg = ScenarioConfig()
    a = generate_channels(cfg, seed=7, realization_index=3)
    b = generate_channels(cfg, seed=7, realization_index=3)
    assert a == b and a.digest() == b.digest()
    assert a != generate_channels(cfg, seed=7, realization_index=4)
    assert a != generate_channels(cfg, seed=7, realization_index=3, attempt=1)


def test_realizations_are_independent_of_order():
    cfg = ScenarioConfig()
    late = generate_channels(cfg, seed=7, realization_index=5)
    for i in range(5):
        generate_channels(cfg, seed=7, realization_index=i)
    assert generate_channels(cfg, seed=7, realization_index=5) == late


def test_channelset_is_read_only():
    ch = generate_channels(ScenarioConfig(), seed=1, realization_index=0)
    assert isinstance(ch, ChannelSet)
    with pytest.raises(ValueError):
        ch.h[0, 0] = 0

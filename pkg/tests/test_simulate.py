"""Simulator tests: draw protocol, exact bin deposits, and backend agreement."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchdens.errors import ConfigError
from switchdens.fields import AffineField
from switchdens.simulate import (
    OccupationHistogram,
    SimConfig,
    SimResult,
    estimate_density,
    holding_time_from_uniform,
    next_state,
    occupation_density,
    sample_holding_time,
    simulate,
)
from switchdens.system import SwitchingRates, SwitchingSystem

from oracles import TwoStateOracle, two_state_system

WINDOW = (-0.5, 1.5)


def drift_system(speeds) -> SwitchingSystem:
    n = len(speeds)
    rates = np.ones((n, n)) - np.eye(n)
    return SwitchingSystem([AffineField(0.0, s) for s in speeds], SwitchingRates(rates))


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(seed=-1, t_max=1.0)
    with pytest.raises(ConfigError):
        SimConfig(seed=0, t_max=0.0)
    with pytest.raises(ConfigError):
        SimConfig(seed=0, t_max=1.0, burn_in=1.0)
    with pytest.raises(ConfigError):
        SimConfig(seed=0, t_max=1.0, replicas=0)
    with pytest.raises(ConfigError):
        SimConfig(seed=0, t_max=1.0, max_switches=0)


def test_holding_time_frozen_value():
    assert holding_time_from_uniform(2.0, 0.5) == pytest.approx(0.34657359027997264, rel=1e-12)
    assert holding_time_from_uniform(2.0, 1.0) == 0.0
    with pytest.raises(ConfigError):
        holding_time_from_uniform(2.0, 0.0)


def test_holding_time_law():
    # seeded LLN check: mean of Exp(2) draws is 1/2
    sys2 = two_state_system(2.0, 3.0)
    rng = np.random.default_rng(11)
    draws = np.array([sample_holding_time(sys2, 0, rng) for _ in range(20000)])
    assert draws.mean() == pytest.approx(0.5, rel=0.03)
    assert draws.min() > 0.0


def test_next_state_frequencies():
    rates = SwitchingRates(np.array([[0.0, 1.0, 3.0],
                                     [1.0, 0.0, 1.0],
                                     [2.0, 2.0, 0.0]]))
    sys3 = SwitchingSystem([AffineField(0.0, 1.0)] * 3, rates)
    rng = np.random.default_rng(5)
    hits = np.bincount([next_state(sys3, 0, rng) for _ in range(20000)], minlength=3)
    assert hits[0] == 0
    assert hits[1] / 20000 == pytest.approx(0.25, abs=0.01)
    assert hits[2] / 20000 == pytest.approx(0.75, abs=0.01)


def test_single_segment_uniform_deposit():
    # unit-speed drift across [0, 1]: every width-0.1 bin collects exactly 0.1
    sys2 = drift_system([1.0, 1.0])
    res = SimResult(
        start_position=0.0, start_state=0,
        times=np.array([]), positions=np.array([]),
        from_states=np.array([], dtype=np.int64), to_states=np.array([], dtype=np.int64),
        final_time=1.0, final_state=0, final_position=1.0, exited=True)
    hist = occupation_density(sys2, res, np.linspace(0.0, 1.0, 11), (0.0, 1.0))
    assert hist.occupation[0] == pytest.approx(np.full(10, 0.1), abs=1e-15)
    assert hist.occupation[1] == pytest.approx(np.zeros(10), abs=0.0)
    assert hist.total_time == pytest.approx(1.0, abs=1e-15)


def test_window_exit_terminates():
    sys2 = drift_system([1.0, 1.0])
    cfg = SimConfig(seed=3, t_max=10.0)
    res = simulate(sys2, 0.0, 0, cfg, (0.0, 1.0))
    assert res.exited
    assert res.final_position == pytest.approx(1.0)
    assert res.final_time == pytest.approx(1.0, rel=1e-12)


def test_two_state_confinement():
    # flows point at 0 and 1 from inside (0, 1); trajectories never leave
    sys2 = two_state_system(2.0, 3.0)
    cfg = SimConfig(seed=21, t_max=300.0)
    res = simulate(sys2, 0.5, 0, cfg, WINDOW)
    assert not res.exited
    assert res.switch_count > 300
    assert res.positions.min() >= 0.0
    assert res.positions.max() <= 1.0
    assert np.all(np.diff(res.times) > 0.0)
    # jump targets alternate in a two-state chain
    assert np.array_equal(res.to_states, 1 - res.from_states)


def test_time_conservation_reference():
    sys2 = two_state_system(2.0, 3.0)
    cfg = SimConfig(seed=9, t_max=200.0, burn_in=25.0)
    res = simulate(sys2, 0.5, 0, cfg, WINDOW)
    hist = occupation_density(sys2, res, np.linspace(0.0, 1.0, 16), WINDOW,
                              burn_in=cfg.burn_in)
    assert hist.total_time == pytest.approx(cfg.t_max - cfg.burn_in, abs=1e-9)
    # nothing escapes [0, 1]
    assert hist.below.sum() + hist.above.sum() == pytest.approx(0.0, abs=1e-12)


def test_backend_agreement():
    # the compiled kernel replays the interpreted path draw for draw
    sys2 = two_state_system(2.0, 3.0)
    cfg = SimConfig(seed=7, t_max=200.0, burn_in=10.0, replicas=2)
    edges = np.linspace(0.0, 1.0, 21)
    h_k, s_k = estimate_density(sys2, 0.5, 0, cfg, edges, WINDOW, method="kernel")
    h_r, s_r = estimate_density(sys2, 0.5, 0, cfg, edges, WINDOW, method="reference")
    assert np.array_equal(s_k.switch_counts, s_r.switch_counts)
    assert np.array_equal(s_k.final_states, s_r.final_states)
    assert s_k.final_times == pytest.approx(s_r.final_times, rel=1e-12)
    assert s_k.final_positions == pytest.approx(s_r.final_positions, rel=1e-6)
    assert h_k.total_time == pytest.approx(h_r.total_time, abs=1e-9)
    np.testing.assert_allclose(h_k.occupation, h_r.occupation, rtol=1e-7, atol=1e-10)


def test_kernel_determinism():
    sys2 = two_state_system(2.0, 3.0)
    cfg = SimConfig(seed=123, t_max=100.0, burn_in=5.0, replicas=3)
    edges = np.linspace(0.0, 1.0, 11)
    h1, s1 = estimate_density(sys2, 0.5, 0, cfg, edges, WINDOW)
    h2, s2 = estimate_density(sys2, 0.5, 0, cfg, edges, WINDOW)
    assert s1.method == "affine_kernel"
    assert np.array_equal(h1.occupation, h2.occupation)
    assert np.array_equal(s1.final_positions, s2.final_positions)


def test_kernel_matches_stationary_law():
    # long single run against the closed-form invariant bin masses
    lam1, lam2 = 2.0, 3.0
    sys2 = two_state_system(lam1, lam2)
    oracle = TwoStateOracle(lam1, lam2)
    edges = np.linspace(0.0, 1.0, 11)
    cfg = SimConfig(seed=42, t_max=30000.0, burn_in=100.0)
    hist, stats = estimate_density(sys2, 0.5, 0, cfg, edges, WINDOW)
    assert stats.exit_count == 0
    est_mass = hist.occupation / hist.total_time
    want = np.vstack([oracle.bin_masses(0, edges), oracle.bin_masses(1, edges)])
    assert np.abs(est_mass - want).sum() < 0.04


def test_kernel_exit_and_exact_deposit():
    sys2 = drift_system([1.0, 1.0])
    cfg = SimConfig(seed=1, t_max=50.0)
    edges = np.linspace(0.0, 1.0, 11)
    hist, stats = estimate_density(sys2, 0.0, 0, cfg, edges, (0.0, 1.0), method="kernel")
    assert stats.exit_count == 1
    assert stats.final_times[0] == pytest.approx(1.0, rel=1e-12)
    assert hist.occupation.sum(axis=0) == pytest.approx(np.full(10, 0.1), abs=1e-12)


def test_merge_rejects_mismatched_edges():
    a = OccupationHistogram.empty(2, np.linspace(0.0, 1.0, 11))
    b = OccupationHistogram.empty(2, np.linspace(0.0, 1.0, 21))
    with pytest.raises(ConfigError):
        a.merge(b)
    with pytest.raises(ConfigError):
        OccupationHistogram.empty(2, np.array([0.0, 0.0, 1.0]))


def test_segments_iterator():
    res = SimResult(
        start_position=0.2, start_state=1,
        times=np.array([0.7]), positions=np.array([0.6]),
        from_states=np.array([1], dtype=np.int64), to_states=np.array([0], dtype=np.int64),
        final_time=1.5, final_state=0, final_position=0.3, exited=False)
    segs = list(res.segments())
    assert segs == [(0.0, 0.7, 1, 0.2, 0.6), (0.7, 1.5, 0, 0.6, 0.3)]


def test_simulate_validation():
    sys2 = two_state_system(2.0, 3.0)
    cfg = SimConfig(seed=0, t_max=1.0)
    with pytest.raises(ConfigError):
        simulate(sys2, 2.0, 0, cfg, (0.0, 1.0))
    with pytest.raises(ConfigError):
        simulate(sys2, 0.5, 5, cfg, (0.0, 1.0))
    with pytest.raises(ConfigError):
        estimate_density(sys2, 0.5, 0, cfg, np.linspace(0, 1, 5), WINDOW, method="bogus")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31), t_max=st.floats(5.0, 40.0))
def test_conservation_property(seed, t_max):
    sys2 = two_state_system(2.0, 3.0)
    cfg = SimConfig(seed=seed, t_max=t_max)
    res = simulate(sys2, 0.5, 0, cfg, WINDOW)
    hist = occupation_density(sys2, res, np.linspace(0.0, 1.0, 13), WINDOW)
    assert not res.exited
    assert hist.total_time == pytest.approx(t_max, abs=1e-9)

from __future__ import annotations

import math

import numpy as np
import pytest

from switchdens.errors import UnsupportedCaseError
from switchdens.fields import AffineField, PolynomialField, TabulatedField
from switchdens.structure import (
    classify_critical_point,
    existence_criterion,
    minimal_invariant_sets,
    reachability_oracle,
)
from switchdens.system import SwitchingRates, SwitchingSystem

from oracles import example_b_system, two_state_system

WINDOW = (-6.0, 6.0)


def make(fields, rates=None):
    n = len(fields)
    r = np.ones((n, n)) if rates is None else np.asarray(rates, dtype=float)
    return SwitchingSystem(fields=tuple(fields), rates=SwitchingRates(r))


def test_full_line_support():
    sets = minimal_invariant_sets(example_b_system(0.5, 0.5), WINDOW)
    assert len(sets) == 1
    s = sets[0]
    assert s.kind == "open_interval"
    assert s.left == -math.inf and s.right == math.inf
    assert not s.left_truncated and not s.right_truncated


def test_unit_interval_support():
    sets = minimal_invariant_sets(two_state_system(1.0, 1.0), WINDOW)
    assert len(sets) == 1
    s = sets[0]
    assert (s.left, s.right) == (0.0, 1.0)
    assert s.left_is_critical and s.right_is_critical


def test_uniformly_critical_singleton():
    sys_deg = make([AffineField(-1.0, 0.0), AffineField(-2.0, 0.0)])
    sets = minimal_invariant_sets(sys_deg, WINDOW)
    assert len(sets) == 1
    assert sets[0].kind == "singleton" and sets[0].point == 0.0


def test_half_line_support():
    sys_drift = make([AffineField(-1.0, 0.0), AffineField(0.0, -1.0)])
    sets = minimal_invariant_sets(sys_drift, WINDOW)
    assert len(sets) == 1
    s = sets[0]
    assert s.left == -math.inf and s.right == 0.0
    assert s.right_is_critical


def test_cubic_three_state_full_line():
    sys_cubic = make([
        PolynomialField((0.0, 1.0, 0.0, -1.0)),   # x - x**3
        AffineField(0.0, 1.0),
        AffineField(0.0, -1.0),
    ])
    sets = minimal_invariant_sets(sys_cubic, WINDOW)
    assert len(sets) == 1
    assert (sets[0].left, sets[0].right) == (-math.inf, math.inf)


def test_tabulated_truncation_flagged():
    xs = np.linspace(-2.0, 2.0, 41)
    tab = TabulatedField(tuple(xs), tuple(-xs), declared_critical_points=(0.0,))
    sys_tab = make([tab, AffineField(0.0, 1.0)])
    sets = minimal_invariant_sets(sys_tab, (-2.0, 2.0))
    assert len(sets) == 1
    s = sets[0]
    assert s.left == 0.0 and s.right == math.inf
    assert s.right_truncated and s.right_edge == 2.0
    assert not s.left_truncated


def test_case_classification_interior_and_endpoint():
    sys_b = example_b_system(0.5, 0.5)
    sets_b = minimal_invariant_sets(sys_b, WINDOW)
    cb = classify_critical_point(sys_b, 0.0, sets_b)
    assert cb.case == "B" and cb.side == "interior" and cb.field_index == 0

    sys_c = two_state_system(1.0, 1.0)
    sets_c = minimal_invariant_sets(sys_c, WINDOW)
    c0 = classify_critical_point(sys_c, 0.0, sets_c)
    assert c0.case == "C" and c0.side == "left_endpoint" and not c0.mirrored
    c1 = classify_critical_point(sys_c, 1.0, sets_c, side="left")
    assert c1.case == "C" and c1.mirrored and c1.field_index == 1
    # looking right from 1 there is only a gap
    c1r = classify_critical_point(sys_c, 1.0, sets_c, side="right")
    assert c1r.case == "A" and c1r.side == "left_of_support_gap"


def test_case_a_for_leftward_drift_system():
    sys_drift = make([AffineField(-1.0, 0.0), AffineField(0.0, -1.0)])
    sets = minimal_invariant_sets(sys_drift, WINDOW)
    c = classify_critical_point(sys_drift, 0.0, sets)
    assert c.case == "A"
    # mirrored view: the support interval ends at 0
    assert classify_critical_point(sys_drift, 0.0, sets, side="left").case == "C"


def test_classification_rejects_shared_critical_point():
    sys_deg = make([AffineField(-1.0, 0.0), AffineField(-2.0, 0.0)])
    sets = minimal_invariant_sets(sys_deg, WINDOW)
    with pytest.raises(UnsupportedCaseError):
        classify_critical_point(sys_deg, 0.0, sets)


def test_existence_example_b():
    rep = existence_criterion(example_b_system(0.5, 0.5))
    assert rep.jump_chain_stationary == pytest.approx([1 / 3] * 3, abs=1e-12)
    assert rep.contraction_coefficients == (1.0, -0.0, 0.0)
    assert rep.mean_contraction == pytest.approx(1 / 3)
    assert rep.exists is True


def test_existence_two_state_and_mixed_signs():
    rep = existence_criterion(two_state_system(2.0, 3.0))
    assert rep.contraction_coefficients == (1.0, 1.0)
    assert rep.mean_contraction == pytest.approx(1.0)
    assert rep.exists is True

    sys_pm = make(
        [AffineField(-1.0, 0.0), AffineField(1.0, 0.0)],
        rates=[[0.0, 1.0], [3.0, 0.0]],
    )
    rep = existence_criterion(sys_pm)
    assert rep.jump_chain_stationary == pytest.approx([0.75, 0.25], abs=1e-12)
    assert rep.contraction_coefficients == (1.0, -1.0)
    assert rep.mean_contraction == pytest.approx(0.5)
    assert rep.exists is True


def test_existence_inconclusive_without_declared_rate():
    sys_cubic = make([PolynomialField((0.0, 1.0, 0.0, -1.0)), AffineField(0.0, 1.0)])
    rep = existence_criterion(sys_cubic)
    assert rep.exists is None and rep.mean_contraction is None
    assert rep.notes
    rep2 = existence_criterion(sys_cubic, declared_alphas={0: 0.3})
    assert rep2.exists is True
    assert rep2.mean_contraction == pytest.approx(0.15)


def test_reachability_inside_unit_interval():
    sys_c = two_state_system(1.0, 1.0)
    assert reachability_oracle(sys_c, 0.5, (0.9, 0.95), budget=400, rng_seed=11)
    assert reachability_oracle(sys_c, 0.5, (0.02, 0.05), budget=400, rng_seed=12)
    assert not reachability_oracle(sys_c, 0.5, (1.1, 1.2), budget=400, rng_seed=13)


def test_reachability_long_haul():
    sys_b = example_b_system(0.5, 0.5)
    assert reachability_oracle(sys_b, -5.0, (4.9, 5.1), budget=400, rng_seed=21)


def test_sets_disjoint_on_random_polynomials():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n = int(rng.integers(2, 4))
        fields = []
        for _ in range(n):
            deg = int(rng.integers(1, 4))
            coefs = rng.uniform(-1.0, 1.0, deg + 1)
            if abs(coefs[-1]) < 0.1:
                coefs[-1] = 0.5
            fields.append(PolynomialField(tuple(coefs)))
        try:
            sets = minimal_invariant_sets(make(fields), WINDOW)
        except Exception:
            continue
        intervals = [s for s in sets if s.kind == "open_interval"]
        for i, s in enumerate(intervals):
            for t in intervals[i + 1:]:
                assert s.right <= t.left or t.right <= s.left
            # endpoint sign conditions
            if math.isfinite(s.left):
                assert all(f(s.left) >= -1e-9 for f in fields)
            if math.isfinite(s.right):
                assert all(f(s.right) <= 1e-9 for f in fields)

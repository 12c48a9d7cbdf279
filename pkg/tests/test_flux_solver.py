"""Flux ODE solver against closed-form stationary laws and structural checks."""

import math

import numpy as np
import pytest

from oracles import TwoStateOracle, example_b_system, two_state_system
from switchdens.asymptotics import fit_exponent
from switchdens.errors import (
    ConfigError,
    DiagnosticError,
    NumericalError,
    UnsupportedCaseError,
)
from switchdens.fields import AffineField, TabulatedField
from switchdens.flux_solver import GridSpec, solve_flux_ode
from switchdens.structure import MinimalInvariantSet, minimal_invariant_sets
from switchdens.system import SwitchingRates, SwitchingSystem


def rel_err(got, want):
    got, want = np.asarray(got), np.asarray(want)
    return np.max(np.abs(got - want) / np.max(np.abs(want)))


class TestTwoStateOracle:
    def test_density_and_flux_match_closed_form(self):
        system = two_state_system(2.0, 3.0)
        oracle = TwoStateOracle(2.0, 3.0)
        grid = solve_flux_ode(system, (0.0, 1.0))
        sel = (grid.nodes >= 0.01) & (grid.nodes <= 0.99)
        xs = grid.nodes[sel]
        for i in range(2):
            assert rel_err(grid.rho[i, sel], oracle.rho(i, xs)) < 1e-6
            assert rel_err(grid.flux[i, sel], oracle.flux(i, xs)) < 1e-6
        assert grid.normalization == 1.0
        assert grid.special_points == (0.0, 1.0)

    def test_flux_sum_and_masses(self):
        grid = solve_flux_ode(two_state_system(2.0, 3.0), (0.0, 1.0))
        assert grid.diagnostics["flux_sum_dev"] < 1e-10
        # Beta(2,4)/Beta(2,3) and Beta(3,3)/Beta(2,3)
        np.testing.assert_allclose(grid.masses, [0.6, 0.4], rtol=1e-8)
        assert abs(grid.masses.sum() - 1.0) < 1e-12

    def test_labeled_interval_route_matches_tuple_route(self):
        system = two_state_system(2.0, 3.0)
        sets = [s for s in minimal_invariant_sets(system, (-0.5, 1.5))
                if s.kind == "open_interval"]
        assert len(sets) == 1
        g_set = solve_flux_ode(system, sets[0])
        g_tup = solve_flux_ode(system, (0.0, 1.0))
        np.testing.assert_allclose(g_set.nodes, g_tup.nodes, rtol=1e-12)
        np.testing.assert_allclose(g_set.rho, g_tup.rho, rtol=1e-10)

    def test_evaluators_between_nodes(self):
        system = two_state_system(2.0, 3.0)
        oracle = TwoStateOracle(2.0, 3.0)
        grid = solve_flux_ode(system, (0.0, 1.0))
        xs = np.array([0.013157, 0.1234567, 0.437, 0.7654321, 0.991113])
        for i in range(2):
            assert rel_err(grid.rho_at(i, xs), oracle.rho(i, xs)) < 1e-7
        one = grid.flux_at(0.437)
        assert one.shape == (2,)
        assert abs(one.sum()) < 1e-10 * np.abs(one).max()
        assert isinstance(grid.rho_at(0, 0.437), float)

    def test_resonant_and_nonresonant_exponents(self):
        # lam1 = 1 makes the left endpoint exponent hit the resonance exactly
        for lam1, lam2 in ((1.0, 3.0), (2.5, 0.8), (0.7, 2.3)):
            oracle = TwoStateOracle(lam1, lam2)
            grid = solve_flux_ode(two_state_system(lam1, lam2), (0.0, 1.0))
            sel = (grid.nodes >= 0.01) & (grid.nodes <= 0.99)
            xs = grid.nodes[sel]
            for i in range(2):
                assert rel_err(grid.rho[i, sel], oracle.rho(i, xs)) < 1e-6

    def test_integrable_blowup_profile(self):
        # lam1 < a: rho1 ~ x^(lam1-1) is unbounded but integrable
        lam1, lam2 = 0.5, 1.0
        oracle = TwoStateOracle(lam1, lam2)
        grid = solve_flux_ode(two_state_system(lam1, lam2), (0.0, 1.0))
        sel = (grid.nodes >= 1e-6) & (grid.nodes <= 0.9)
        xs = grid.nodes[sel]
        assert np.max(np.abs(grid.rho[0, sel] / oracle.rho(0, xs) - 1.0)) < 1e-5
        near = grid.nodes <= 1e-2
        fit = fit_exponent(grid.nodes[near], grid.rho[0, near])
        assert fit.exponent == pytest.approx(-0.5, abs=0.01)
        assert abs(grid.masses.sum() - 1.0) < 1e-9

    def test_mirror_symmetric_rates(self):
        # equal rates make the system invariant under x -> 1 - x with 1 <-> 2
        grid = solve_flux_ode(two_state_system(1.7, 1.7), (0.0, 1.0))
        xs = np.linspace(0.05, 0.95, 19)
        np.testing.assert_allclose(
            grid.rho_at(0, xs), grid.rho_at(1, 1.0 - xs), rtol=1e-8)


class TestThreeStateInterior:
    # the window must be wide enough that the truncated tails are negligible;
    # the bulk error of a solve on (-w, w) shrinks with the tail density there
    def setup_method(self):
        self.system = example_b_system(1.0, 1.0)
        self.grid = solve_flux_ode(self.system, (-12.0, 12.0))

    def test_symmetry_and_positivity(self):
        xs = np.linspace(0.2, 5.0, 25)
        np.testing.assert_allclose(
            self.grid.rho_at(1, xs), self.grid.rho_at(2, -xs), rtol=1e-6)
        np.testing.assert_allclose(
            self.grid.rho_at(0, xs), self.grid.rho_at(0, -xs), rtol=1e-6)
        assert self.grid.rho.min() >= 0.0
        assert abs(self.grid.masses.sum() - 1.0) < 1e-9

    def test_bounded_limit_at_interior_critical_point(self):
        # lam1 = 2 > a = 1: rho1 tends to rho_bar(0) / (lam1 - a) = rho2 + rho3
        lim = self.grid.rho_at(0, 1e-7)
        feed = self.grid.rho_at(1, 0.0) + self.grid.rho_at(2, 0.0)
        assert lim == pytest.approx(feed, rel=1e-4)

    def test_interior_point_is_resonant_sink(self):
        info = self.grid.diagnostics["critical_points"]
        assert len(info) == 1
        assert info[0]["x"] == pytest.approx(0.0, abs=1e-12)
        assert info[0]["mu"] == pytest.approx(2.0, rel=1e-9)
        assert info[0]["resonant"] and not info[0]["repelling"]

    def test_flux_sum_constant_near_zero(self):
        # both edges truncated: the flux sum is a constant, pinned near zero
        # by the edge conditions at the truncation level
        assert self.grid.diagnostics["flux_sum_dev"] < 1e-4


class TestInfiniteSide:
    def test_auto_extension_reaches_negligible_edge(self):
        # u1 = -x, u2 = +1: gamma-type law rho1 = K x e^(-3x),
        # rho2 = K x^2 e^(-3x), K = 27/5 from unit total mass
        system = SwitchingSystem(
            fields=(AffineField(-1.0, 0.0), AffineField(0.0, 1.0)),
            rates=SwitchingRates(np.array([[0.0, 2.0], [3.0, 0.0]])),
        )
        iv = MinimalInvariantSet("open_interval", 0.0, math.inf,
                                 left_is_critical=True)
        grid = solve_flux_ode(system, iv, window=(-1.0, 2.0))
        assert grid.interval[1] > 5.0
        assert grid.diagnostics["edge_density_rel"][1] < 1e-6
        assert grid.diagnostics["notes"] == ()
        xs = np.linspace(0.05, 4.0, 50)
        k = 27.0 / 5.0
        np.testing.assert_allclose(
            grid.rho_at(0, xs), k * xs * np.exp(-3.0 * xs), rtol=1e-6)
        np.testing.assert_allclose(
            grid.rho_at(1, xs), k * xs ** 2 * np.exp(-3.0 * xs), rtol=1e-6)
        assert abs(grid.masses.sum() - 1.0) < 1e-9

    def test_infinite_interval_without_window_rejected(self):
        system = two_state_system(2.0, 3.0)
        iv = MinimalInvariantSet("open_interval", 0.0, math.inf,
                                 left_is_critical=True)
        with pytest.raises(ConfigError):
            solve_flux_ode(system, iv)


class TestTabulatedFallback:
    def test_tabulated_critical_endpoints(self):
        xs = np.linspace(-2.0, 3.0, 201)
        system = SwitchingSystem(
            fields=(TabulatedField(tuple(xs), tuple(-xs)), AffineField(-1.0, 1.0)),
            rates=SwitchingRates(np.array([[0.0, 2.0], [3.0, 0.0]])),
        )
        oracle = TwoStateOracle(2.0, 3.0)
        grid = solve_flux_ode(system, (0.0, 1.0))
        info = grid.diagnostics["critical_points"]
        assert all(not entry["series"] for entry in info)
        pts = np.linspace(0.05, 0.95, 19)
        for i in range(2):
            assert rel_err(grid.rho_at(i, pts), oracle.rho(i, pts)) < 1e-6
        np.testing.assert_allclose(grid.masses, [0.6, 0.4], rtol=1e-6)

    def test_tabulated_interior_matches_analytic_route(self):
        xs = np.linspace(-30.0, 30.0, 61)
        tab_system = SwitchingSystem(
            fields=(TabulatedField(tuple(xs), tuple(-xs)),
                    AffineField(0.0, 1.0), AffineField(0.0, -1.0)),
            rates=SwitchingRates(np.array([
                [0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])),
        )
        g_tab = solve_flux_ode(tab_system, (-12.0, 12.0))
        g_ref = solve_flux_ode(example_b_system(1.0, 1.0), (-12.0, 12.0))
        pts = np.concatenate([np.linspace(-4.0, -0.2, 12), np.linspace(0.2, 4.0, 12)])
        for i in range(3):
            assert rel_err(g_tab.rho_at(i, pts), g_ref.rho_at(i, pts)) < 1e-4


class TestRejections:
    def test_singleton_has_no_density(self):
        iv = MinimalInvariantSet("singleton", 0.3, 0.3)
        with pytest.raises(UnsupportedCaseError, match="point mass"):
            solve_flux_ode(two_state_system(1.0, 1.0), iv)

    def test_repelling_critical_endpoint(self):
        system = SwitchingSystem(
            fields=(AffineField(1.0, 0.0), AffineField(0.0, -1.0)),
            rates=SwitchingRates(np.array([[0.0, 1.0], [1.0, 0.0]])),
        )
        with pytest.raises(UnsupportedCaseError, match="epelling"):
            solve_flux_ode(system, (0.0, 1.0))

    def test_window_without_critical_structure(self):
        with pytest.raises(DiagnosticError, match="no critical point"):
            solve_flux_ode(two_state_system(2.0, 3.0), (0.3, 0.6))

    def test_window_not_overlapping_interval(self):
        iv = MinimalInvariantSet("open_interval", 0.0, 1.0,
                                 left_is_critical=True, right_is_critical=True)
        with pytest.raises(ConfigError):
            solve_flux_ode(two_state_system(2.0, 3.0), iv, window=(2.0, 3.0))

    def test_infinite_tuple_rejected(self):
        with pytest.raises(ConfigError):
            solve_flux_ode(two_state_system(2.0, 3.0), (0.0, math.inf))

    def test_near_reducible_rates_degenerate_subspace(self):
        # two almost uncoupled copies with disjoint supports: the stationary
        # profile is no longer unique at working precision
        eps_r = 1e-14
        system = SwitchingSystem(
            fields=(AffineField(-1.0, 0.1), AffineField(-1.0, 0.4),
                    AffineField(-1.0, 0.6), AffineField(-1.0, 0.9)),
            rates=SwitchingRates(np.array([
                [0.0, 2.0, eps_r, 0.0],
                [3.0, 0.0, 0.0, eps_r],
                [eps_r, 0.0, 0.0, 2.0],
                [0.0, eps_r, 3.0, 0.0],
            ])),
        )
        with pytest.raises(DiagnosticError, match="degenerate"):
            solve_flux_ode(system, (0.1, 0.9))

    def test_grid_spec_validation(self):
        with pytest.raises(ConfigError):
            GridSpec(ratio=1.0)
        with pytest.raises(ConfigError):
            GridSpec(min_offset_rel=0.0)

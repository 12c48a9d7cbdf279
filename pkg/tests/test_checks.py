"""Residual checks against the closed form and solved grids."""

import numpy as np
import pytest

from oracles import TwoStateOracle, example_b_system, two_state_system
from switchdens.checks import appendix_identity_check, representation_check
from switchdens.errors import ConfigError, UnsupportedCaseError
from switchdens.flux_solver import DensityGrid, solve_flux_ode
from switchdens.pf_solver import density_grid_from_functions


def oracle_grid(system, oracle):
    fns = [lambda x: oracle.rho(0, x), lambda x: oracle.rho(1, x)]
    return density_grid_from_functions(system, (0.0, 1.0), fns)


class TestRepresentation:
    def setup_method(self):
        self.system = two_state_system(2.0, 3.0)
        self.oracle = TwoStateOracle(2.0, 3.0)
        self.grid = oracle_grid(self.system, self.oracle)

    def test_oracle_residual(self):
        assert representation_check(self.system, self.grid, 0.05) < 1e-6

    def test_oracle_residual_mid_range(self):
        assert representation_check(self.system, self.grid, 0.5) < 1e-6

    def test_solved_grid_residual(self):
        solved = solve_flux_ode(self.system, (0.0, 1.0))
        # half the clearance radius: the far critical point sits at 1
        assert representation_check(self.system, solved, 0.5) < 1e-4

    def test_interior_critical_frame_with_truncated_tail(self):
        system = example_b_system(1.0, 1.0)
        solved = solve_flux_ode(system, (-9.0, 9.0))
        assert representation_check(system, solved, 0.3) < 1e-3

    def test_zero_inflow_gives_zero_rhs(self):
        orc = self.oracle
        fns = [lambda x: orc.rho(0, x),
               lambda x: np.zeros_like(np.asarray(x, dtype=float))]
        grid = density_grid_from_functions(self.system, (0.0, 1.0), fns)
        # RHS vanishes with the inflow, so the residual is exactly 1
        assert representation_check(self.system, grid, 0.1) == 1.0

    def test_zero_grid_residual_zero(self):
        zero = [lambda x: np.zeros_like(np.asarray(x, dtype=float))] * 2
        grid = density_grid_from_functions(self.system, (0.0, 1.0), zero)
        assert representation_check(self.system, grid, 0.1) == 0.0

    def test_position_outside_frame_rejected(self):
        with pytest.raises(UnsupportedCaseError):
            representation_check(self.system, self.grid, 0.0)
        with pytest.raises(UnsupportedCaseError):
            representation_check(self.system, self.grid, 1.5)


class TestAppendixIdentity:
    def setup_method(self):
        self.system = two_state_system(2.0, 3.0)
        self.oracle = TwoStateOracle(2.0, 3.0)
        self.grid = oracle_grid(self.system, self.oracle)

    def test_oracle_residual(self):
        assert appendix_identity_check(self.system, self.grid, 0.1) < 1e-8

    def node_grid(self, rho):
        ref = self.grid
        return DensityGrid(nodes=ref.nodes, rho=rho, flux=ref.flux,
                           normalization=1.0, interval=(0.0, 1.0),
                           masses=ref.masses, special_points=(0.0, 1.0))

    def test_perturbed_node_inflates_residual(self):
        ref = self.grid
        k = int(np.argmin(np.abs(ref.nodes - 0.1)))
        eta = float(ref.nodes[k])
        base = appendix_identity_check(self.system,
                                       self.node_grid(ref.rho.copy()), eta)
        pert = ref.rho.copy()
        pert[0, k] *= 1.01
        got = appendix_identity_check(self.system, self.node_grid(pert), eta)
        assert got >= 10.0 * base

    def test_zero_density_zero_residual(self):
        zero = self.node_grid(np.zeros_like(self.grid.rho))
        assert appendix_identity_check(self.system, zero, 0.1) == 0.0

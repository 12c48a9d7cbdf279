"""Solver-independent residual checks near attracting critical points.

Close to a critical point where its own field pulls the state inward, the
density of that state is fully determined by the inflow from the other
states through a one-dimensional integral: the local coordinate splits the
transport kernel into an explicit power of the distance and a bounded
correction factor.  `representation_check` evaluates that formula from
grid values and reports the relative mismatch against the grid's own
density.

`appendix_identity_check` closes the loop in the other direction: it
reconstructs the inflow from the state's own density and derivative via
the stationary balance equation and pushes it through the plain transport
kernel.  Equality with the split-form value is an integration-by-parts
statement that only holds for an actual solution, so the residual reacts
sharply to local corruption of the grid.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import CubicSpline

from .asymptotics import linearize_at_critical
from .errors import ConfigError, DegenerateModelError, UnsupportedCaseError
from .flux_solver import DensityGrid, _endpoint_critical
from .pf_solver import _interpolants
from .system import SwitchingSystem

__all__ = ["representation_check", "appendix_identity_check"]

GL_X, GL_W = np.polynomial.legendre.leggauss(16)
QUAD_CELLS = 1024


def _frame(system: SwitchingSystem, grid: DensityGrid, eta: float):
    """Attracting critical point and side whose clearance radius covers eta."""
    lo, hi = grid.interval
    anchors = list(dict.fromkeys(grid.special_points))
    for x in (lo, hi):
        if x not in anchors and _endpoint_critical(system, x, (lo, hi)):
            anchors.append(x)
    frames = []
    for xi in anchors:
        for side in (1, -1):
            try:
                lin = linearize_at_critical(system, xi, side=side,
                                            window=(lo, hi))
            except DegenerateModelError:
                continue
            if lin.a <= 0.0:
                continue
            eta_hat = side * (eta - xi)
            if 0.0 < eta_hat < lin.delta:
                frames.append((eta_hat, xi, side, lin))
    if not frames:
        raise UnsupportedCaseError(
            "position is not framed by an attracting critical point within "
            "its clearance radius")
    return min(frames, key=lambda f: f[0])


def _panels(bounds: np.ndarray):
    mids = 0.5 * (bounds[:-1] + bounds[1:])
    half = 0.5 * np.diff(bounds)
    zq = (mids[:, None] + half[:, None] * GL_X[None, :]).ravel()
    wq = (half[:, None] * GL_W[None, :]).ravel()
    return zq, wq


def _integration_range(grid: DensityGrid, xi: float, side: int, lin):
    """Local-coordinate quadrature range and whether the far limit was cut."""
    if side > 0:
        reach = float(grid.nodes[-1]) - xi
    else:
        reach = xi - float(grid.nodes[0])
    end_hat = min(lin.theta, reach)
    return end_hat, lin.theta > reach


def _setup(system, grid, fns, xi, side, jc, lin, eta_hat):
    end_hat, truncated = _integration_range(grid, xi, side, lin)
    if end_hat <= eta_hat:
        raise ConfigError("grid carries no room above the probe position")
    bounds = np.linspace(eta_hat, end_hat, QUAD_CELLS + 1)
    zq, wq = _panels(bounds)

    def u_loc(zh):
        return side * np.asarray(system.u(jc, xi + side * np.asarray(zh)),
                                 dtype=float)

    def rho_bar(zh):
        x = xi + side * np.asarray(zh)
        lam = system.rates.flux_matrix[jc]
        total = np.zeros_like(np.asarray(zh, dtype=float))
        for j in range(system.n):
            if j != jc and lam[j] != 0.0:
                total += lam[j] * np.asarray(fns[j](x), dtype=float)
        return total

    return end_hat, truncated, bounds, zq, wq, u_loc, rho_bar


def _split_form_value(system, grid, fns, xi, side, jc, lin, eta_hat):
    """Right-hand side of the split representation, plus a far-tail bound."""
    lam_c = float(system.rates.holding[jc])
    a = lin.a
    end_hat, truncated, bounds, zq, wq, u_loc, rho_bar = _setup(
        system, grid, fns, xi, side, jc, lin, eta_hat)
    r_bounds = -1.0 / u_loc(bounds) - 1.0 / (a * bounds)
    cum_r = CubicSpline(bounds, r_bounds).antiderivative()

    def integrand(zh):
        return (np.asarray(zh) ** (-lam_c / a) * rho_bar(zh) *
                np.exp(-lam_c * cum_r(zh)))

    integral = float(wq @ integrand(zq))
    tail = 0.0
    if truncated:
        # the kernel keeps decaying at least at its local e-fold rate, so a
        # rectangle of that length bounds the lost far tail
        efold = abs(float(u_loc(end_hat))) / lam_c
        width = min(lin.theta - end_hat, efold)
        tail = abs(float(integrand(end_hat))) * width
    r_eta = float(-1.0 / u_loc(eta_hat) - 1.0 / (a * eta_hat))
    pref = eta_hat ** (lam_c / a - 1.0) / a + r_eta * eta_hat ** (lam_c / a)
    return pref * integral, abs(pref) * tail


def representation_check(system: SwitchingSystem, grid: DensityGrid,
                         eta: float) -> float:
    """Relative residual of the split-form density representation at eta.

    Returns |RHS - rho(eta)| / rho(eta), with the far-tail truncation
    bound folded into the numerator when the grid stops short of the
    backward-flow limit.
    """
    eta = float(eta)
    eta_hat, xi, side, lin = _frame(system, grid, eta)
    fns = _interpolants(grid)
    rhs, tail = _split_form_value(system, grid, fns, xi, side,
                                  lin.crit_index, lin, eta_hat)
    lhs = float(fns[lin.crit_index](eta))
    if rhs == 0.0 and lhs == 0.0:
        return 0.0
    if lhs == 0.0:
        return math.inf
    return (abs(rhs - lhs) + tail) / abs(lhs)


def appendix_identity_check(system: SwitchingSystem, grid: DensityGrid,
                            eta: float) -> float:
    """Integration-by-parts consistency of the two kernel forms at eta.

    The inflow is re-derived from the critical state's own density and
    derivative through the stationary balance, integrated against the
    plain transport kernel, and compared with the split-form value.
    """
    eta = float(eta)
    eta_hat, xi, side, lin = _frame(system, grid, eta)
    jc = lin.crit_index
    lam_c = float(system.rates.holding[jc])
    fns = _interpolants(grid)
    end_hat, truncated, bounds, zq, wq, u_loc, _ = _setup(
        system, grid, fns, xi, side, jc, lin, eta_hat)

    # C1 interpolant of the critical state's density in the local frame
    rho1 = CubicSpline(bounds, np.asarray(fns[jc](xi + side * bounds),
                                          dtype=float))
    drho1 = rho1.derivative()
    cum_inv_u = CubicSpline(bounds, 1.0 / u_loc(bounds)).antiderivative()

    def balance_inflow(zh):
        du = np.asarray(system.du(jc, xi + side * np.asarray(zh)), dtype=float)
        return (lam_c + du) * rho1(zh) + u_loc(zh) * drho1(zh)

    def integrand(zh):
        return balance_inflow(zh) * np.exp(lam_c * cum_inv_u(zh))

    lhs = -float(wq @ integrand(zq)) / float(u_loc(eta_hat))
    tail_lhs = 0.0
    if truncated:
        efold = abs(float(u_loc(end_hat))) / lam_c
        width = min(lin.theta - end_hat, efold)
        tail_lhs = (abs(float(integrand(end_hat))) * width /
                    abs(float(u_loc(eta_hat))))
    rhs, tail_rhs = _split_form_value(system, grid, fns, xi, side, jc, lin,
                                      eta_hat)
    if lhs == 0.0 and rhs == 0.0:
        return 0.0
    denom = abs(rhs) if rhs != 0.0 else abs(lhs)
    return (abs(lhs - rhs) + tail_lhs + tail_rhs) / denom

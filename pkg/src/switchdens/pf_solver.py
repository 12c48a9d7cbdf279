"""Fixed-point route to the invariant densities.

Over any horizon T > 0 the invariant density of a state satisfies an
integral identity: it equals the survival-weighted pushforward of itself
along its own backward flow, plus the survival- and residence-weighted
inflow contributed by the other states.  Both terms reduce to kernel
integrals along the backward flow after the change of variables from time
to position, which is how `perron_frobenius_step` evaluates them on a
grid.  Iterating the step from any positive start converges to the
stationary profile; the infinite-horizon form of the same identity, which
has no free horizon left in it, serves as an independent certificate of
the result.

The horizon is applied per node: where the backward flow would leave the
working interval earlier than T, the step uses the exit time instead.
The identity holds for every positive horizon, so this keeps it exact
while only ever reading density values inside the interval.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError
from .flowmaps import TravelMap
from .flux_solver import (DensityGrid, GridSpec, _endpoint_critical,
                          _interior_criticals, _resolve_interval,
                          _segment_nodes)
from .system import SwitchingSystem

__all__ = ["perron_frobenius_step", "iterate_to_fixed_point",
           "density_grid_from_functions", "uniform_density_grid",
           "fixed_point_certificate"]

GL_X, GL_W = np.polynomial.legendre.leggauss(16)


# -- grid construction -----------------------------------------------------

def _mesh(system: SwitchingSystem, lo: float, hi: float, spec: GridSpec):
    d0 = spec.min_offset_rel * (hi - lo)
    interior = _interior_criticals(system, lo, hi, 2.0 * d0)
    lo_crit = _endpoint_critical(system, lo, (lo, hi))
    hi_crit = _endpoint_critical(system, hi, (lo, hi))
    specials = [lo] + interior + [hi]
    flags = [lo_crit] + [True] * len(interior) + [hi_crit]
    parts = [_segment_nodes(specials[k], specials[k + 1], flags[k],
                            flags[k + 1], d0, spec)
             for k in range(len(specials) - 1)]
    nodes = np.unique(np.concatenate(parts))
    crit_pts = tuple(x for x, f in zip(specials, flags) if f)
    return nodes, crit_pts


def _cell_quadrature(nodes: np.ndarray):
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    half = 0.5 * np.diff(nodes)
    qx = (mids[:, None] + half[:, None] * GL_X[None, :]).ravel()
    qw = (half[:, None] * GL_W[None, :]).ravel()
    return qx, qw


def _grid_masses(nodes: np.ndarray, fns: Sequence[Callable]) -> np.ndarray:
    qx, qw = _cell_quadrature(nodes)
    return np.array([float(np.asarray(f(qx), dtype=float) @ qw) for f in fns])


def _package(system, nodes, rho, interval, crit_pts, fns, diagnostics):
    n = system.n
    u_nodes = np.vstack([np.asarray(system.u(i, nodes), dtype=float)
                         for i in range(n)])
    masses = _grid_masses(nodes, fns)

    def rho_eval(i, x):
        return fns[i](x)

    def flux_eval(x):
        xs = np.asarray(x, dtype=float)
        vals = np.vstack([np.asarray(fns[i](xs), dtype=float) *
                          np.asarray(system.u(i, xs), dtype=float)
                          for i in range(n)])
        return vals[:, 0] if xs.ndim == 0 else vals

    return DensityGrid(
        nodes=nodes, rho=rho, flux=rho * u_nodes,
        normalization=float(masses.sum()), interval=interval, masses=masses,
        special_points=crit_pts, diagnostics=diagnostics,
        flux_eval=flux_eval, rho_eval=rho_eval)


def density_grid_from_functions(system: SwitchingSystem, interval,
                                fns: Sequence[Callable],
                                grid_spec: GridSpec | None = None, *,
                                window=None) -> DensityGrid:
    """Sample per-state density callables onto a graded grid.

    The callables stay attached as the grid's evaluators, so later kernel
    quadrature reads them directly instead of re-interpolating the nodes.
    """
    spec = grid_spec or GridSpec()
    lo, hi, _, _, _, _ = _resolve_interval(system, interval, window)
    if len(fns) != system.n:
        raise ConfigError("one density callable per state required")
    nodes, crit_pts = _mesh(system, lo, hi, spec)
    rho = np.vstack([np.asarray(f(nodes), dtype=float) for f in fns])
    if rho.min() < 0.0:
        raise ConfigError("density values must be nonnegative")
    return _package(system, nodes, rho, (lo, hi), crit_pts, fns, {})


def uniform_density_grid(system: SwitchingSystem, interval,
                         grid_spec: GridSpec | None = None, *,
                         window=None) -> DensityGrid:
    """Flat start with unit total mass, the default iteration seed."""
    spec = grid_spec or GridSpec()
    lo, hi, _, _, _, _ = _resolve_interval(system, interval, window)
    c = 1.0 / (system.n * (hi - lo))
    fns = [(lambda x, c=c: np.full_like(np.asarray(x, dtype=float), c))
           for _ in range(system.n)]
    nodes, crit_pts = _mesh(system, lo, hi, spec)
    rho = np.full((system.n, nodes.size), c)
    return _package(system, nodes, rho, (lo, hi), crit_pts, fns, {})


# -- the transfer step -----------------------------------------------------

def _interpolants(grid: DensityGrid) -> list[Callable]:
    if grid.rho_eval is not None:
        return [lambda x, i=i: np.asarray(grid.rho_eval(i, x), dtype=float)
                for i in range(grid.n)]
    return [CubicSpline(grid.nodes, grid.rho[i]) for i in range(grid.n)]


def _default_horizon(system: SwitchingSystem) -> float:
    return 1.0 / float(np.max(system.rates.holding))


def _state_sweep(system, grid, fns, travel, i, horizon, *, averaged,
                 warn_lo=False, warn_hi=False):
    """Kernel integrals for one state at every node.

    averaged=True evaluates the finite-horizon identity (1/T prefactor,
    residence weight T - s on the inflow); averaged=False the
    horizon-free inflow operator alone.  The position integral always
    stops at the upstream boundary: beyond a support endpoint the density
    is zero and nothing is lost, while at a truncated window edge the
    cut discards a real tail, which is what the shrunk counter records.
    """
    nodes = grid.nodes
    lam_in = system.rates.flux_matrix[i].copy()
    lam_in[i] = 0.0
    li = float(system.rates.holding[i])
    out = np.empty(nodes.size)
    shrunk = 0
    for k, eta in enumerate(nodes):
        piece = travel.piece_for(i, float(eta))
        w_eta = float(piece.W(float(eta)))
        if piece.sign > 0.0:
            up_x = max(piece.a_eff, float(nodes[0]))
            lossy = warn_lo and not piece.a_critical
        else:
            up_x = min(piece.b_eff, float(nodes[-1]))
            lossy = warn_hi and not piece.b_critical
        w_up = float(piece.W(up_x))
        t_reach = w_eta - w_up
        t_int = min(horizon, t_reach)
        if t_int < horizon and lossy:
            shrunk += 1
        if t_int <= 0.0:
            out[k] = 0.0
            continue
        a = up_x if t_int >= t_reach else float(piece.invert_W(w_eta - t_int))
        # cells follow the grid submesh so the density interpolant stays
        # polynomial within each quadrature panel
        lo_ab, hi_ab = min(a, eta), max(a, eta)
        inner = nodes[(nodes > lo_ab) & (nodes < hi_ab)]
        if a <= eta:
            bounds = np.concatenate([[a], inner, [eta]])
        else:
            bounds = np.concatenate([[a], inner[::-1], [eta]])
        mids = 0.5 * (bounds[:-1] + bounds[1:])
        half = 0.5 * np.diff(bounds)
        zq = (mids[:, None] + half[:, None] * GL_X[None, :]).ravel()
        wq = (half[:, None] * GL_W[None, :]).ravel()
        s = np.clip(w_eta - np.asarray(piece.W(zq), dtype=float), 0.0, None)
        surv = np.exp(-li * s)
        feed = np.zeros_like(zq)
        for j in range(grid.n):
            if lam_in[j] != 0.0:
                feed += lam_in[j] * np.asarray(fns[j](zq), dtype=float)
        if averaged:
            integ = surv * (np.asarray(fns[i](zq), dtype=float) +
                            (horizon - s) * feed)
            out[k] = float(wq @ integ) / (horizon * float(system.u(i, float(eta))))
        else:
            out[k] = float(wq @ (surv * feed)) / float(system.u(i, float(eta)))
    return out, shrunk


def perron_frobenius_step(system: SwitchingSystem, grid: DensityGrid,
                          T: float | None = None) -> DensityGrid:
    """One application of the transfer identity on the grid.

    Output node values are the right-hand side of the finite-horizon
    identity; for the invariant density this reproduces the input up to
    quadrature error.  No renormalization happens here.
    """
    horizon = _default_horizon(system) if T is None else float(T)
    if horizon <= 0.0:
        raise ConfigError("horizon must be positive")
    lo, hi = grid.interval
    travel = TravelMap(system, (lo, hi))
    fns = _interpolants(grid)
    # at a support endpoint some field vanishes and the zero extension of
    # the density is exact; an edge critical for no field is a truncation
    warn_lo = not _endpoint_critical(system, lo, (lo, hi))
    warn_hi = not _endpoint_critical(system, hi, (lo, hi))
    rho = np.empty_like(grid.rho)
    shrunk = 0
    for i in range(grid.n):
        rho[i], s_i = _state_sweep(system, grid, fns, travel, i, horizon,
                                   averaged=True, warn_lo=warn_lo,
                                   warn_hi=warn_hi)
        shrunk += s_i
    if shrunk:
        warnings.warn(
            f"backward flow leaves the working interval at {shrunk} node "
            "evaluations; horizon shrunk there (window truncation)",
            RuntimeWarning, stacklevel=2)
    splines = [CubicSpline(grid.nodes, rho[i]) for i in range(grid.n)]
    diagnostics = {"horizon": horizon, "horizon_shrunk": shrunk}
    return _package(system, grid.nodes, rho, grid.interval,
                    grid.special_points, splines, diagnostics)


# -- iteration and certificate ---------------------------------------------

def _l1_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros(nodes.size)
    h = np.diff(nodes)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def fixed_point_certificate(system, grid, tol: float = 1e-8) -> float:
    """Relative stationarity defect of a density grid.

    Horizon-free form of the balance identity: the answer measures the grid
    itself, not any particular step length. tol sets where the survival
    tail of the time integral is cut.
    """
    return _infinite_horizon_residual(system, grid, tol)


def _infinite_horizon_residual(system, grid, tol: float) -> float:
    """Relative L1 gap in the horizon-free inflow identity.

    The time integral is truncated where the survival weight drops below
    a tenth of the tolerance; within the interval the flow-exit clipping
    is exact because the density vanishes beyond a support endpoint.
    """
    tail = max(min(tol, 1e-3), 1e-14) / 10.0
    lo, hi = grid.interval
    travel = TravelMap(system, (lo, hi))
    fns = _interpolants(grid)
    w = _l1_weights(grid.nodes)
    gap = 0.0
    scale = 0.0
    for i in range(grid.n):
        horizon = math.log(1.0 / tail) / float(system.rates.holding[i])
        rhs, _ = _state_sweep(system, grid, fns, travel, i, horizon,
                              averaged=False)
        gap += float(w @ np.abs(rhs - grid.rho[i]))
        scale += float(w @ np.abs(grid.rho[i]))
    return gap / scale if scale > 0.0 else 0.0


def iterate_to_fixed_point(system: SwitchingSystem, initial: DensityGrid,
                           T: float | None = None, tol: float = 1e-10,
                           max_iters: int = 200) -> DensityGrid:
    """Iterate the transfer step, renormalizing each sweep, until the L1
    change between successive iterates drops below tol.

    The returned grid carries the sweep count, the final change, and the
    horizon-free identity residual as an independent certificate; if the
    tolerance is never reached the best iterate comes back with
    converged=False rather than an error.
    """
    if not np.isfinite(tol):
        return initial
    if max_iters < 1:
        raise ConfigError("max_iters must be at least 1")
    w = _l1_weights(initial.nodes)
    cur = initial
    change = math.inf
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iters + 1):
        nxt = perron_frobenius_step(system, cur, T)
        total = nxt.normalization
        if total <= 0.0:
            raise ConfigError("iteration collapsed to zero mass")
        scaled = nxt.rho / total
        change = float(sum(w @ np.abs(scaled[i] - cur.rho[i])
                           for i in range(cur.n)))
        splines = [CubicSpline(nxt.nodes, scaled[i]) for i in range(cur.n)]
        cur = _package(system, nxt.nodes, scaled, nxt.interval,
                       nxt.special_points, splines, nxt.diagnostics)
        if change < tol:
            converged = True
            break
    cur.diagnostics.update({
        "sweeps": sweeps,
        "final_change": change,
        "converged": converged,
        "infinite_horizon_residual": _infinite_horizon_residual(
            system, cur, tol if np.isfinite(tol) else 1e-10),
    })
    return cur

"""Switching system model: states, rates, flows.

A system couples n scalar fields u_i with a matrix of switching rates
lambda_{i,j}. The process follows du/dt = u_i(x) in state i, holds state i an
Exp(lambda_i) time with lambda_i = sum_j lambda_{i,j}, then jumps to j with
probability lambda_{i,j} / lambda_i.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import DegenerateModelError, NumericalError
from .fields import AffineField, VectorField, critical_points, field_scale

__all__ = [
    "FlowResult",
    "SwitchingRates",
    "SwitchingSystem",
    "backward_flow",
    "flow",
    "flow_derivative",
    "travel_time",
]

ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
ESCAPE_FACTOR = 1e3   # backward-flow positions beyond this many window widths count as blow-up


@dataclass(frozen=True, eq=False)
class SwitchingRates:
    """Off-diagonal switching rates; the diagonal is ignored and kept zero."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DegenerateModelError("rate matrix must be square")
        if m.shape[0] < 2:
            raise DegenerateModelError("need at least two states")
        np.fill_diagonal(m, 0.0)
        if np.any(m < 0.0):
            raise DegenerateModelError("switching rates must be nonnegative")
        holding = m.sum(axis=1)
        for i, h in enumerate(holding):
            if h <= 0.0:
                raise DegenerateModelError(f"state {i} has zero total switching rate")
        # unique stationary law needs one communicating class
        reach = m > 0.0
        closure = reach.copy()
        for _ in range(m.shape[0]):
            closure = closure | (closure @ reach)
        if not closure.all():
            raise DegenerateModelError("rate matrix is not irreducible")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def holding(self) -> np.ndarray:
        """Total exit rate lambda_i per state."""
        out = self.matrix.sum(axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def jump_probs(self) -> np.ndarray:
        out = self.matrix / self.holding[:, None]
        out.setflags(write=False)
        return out

    @cached_property
    def generator(self) -> np.ndarray:
        """CTMC generator Q: Q[i][j] = lambda_{i,j}, Q[i][i] = -lambda_i."""
        q = self.matrix.copy()
        q[np.diag_indices(self.n)] = -self.holding
        q.setflags(write=False)
        return q

    @cached_property
    def flux_matrix(self) -> np.ndarray:
        """Generator transpose: column sums vanish, entry [i][j] = lambda_{j,i}."""
        out = np.ascontiguousarray(self.generator.T)
        out.setflags(write=False)
        return out

    @cached_property
    def stationary_law(self) -> np.ndarray:
        """Stationary law nu of the switching chain: nu Q = 0, sum nu = 1."""
        _, _, vt = np.linalg.svd(self.generator.T)
        nu = vt[-1]
        nu = nu / nu.sum()
        if np.any(nu <= 0.0):
            raise NumericalError("stationary law of the switching chain is not positive")
        nu.setflags(write=False)
        return nu


@dataclass(frozen=True, eq=False)
class SwitchingSystem:
    fields: tuple[VectorField, ...]
    rates: SwitchingRates

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if len(self.fields) != self.rates.n:
            raise DegenerateModelError(
                f"{len(self.fields)} fields for {self.rates.n} states"
            )

    @property
    def n(self) -> int:
        return self.rates.n

    def u(self, i: int, x):
        return self.fields[i](x)

    def du(self, i: int, x):
        return self.fields[i].derivative(x)

    def critical_points(self, i: int, window: tuple[float, float]):
        return critical_points(self.fields[i], window)

    def scale(self, window: tuple[float, float]) -> float:
        return max(field_scale(f, window) for f in self.fields)

    @property
    def all_analytic(self) -> bool:
        return all(f.analytic for f in self.fields)


@dataclass(frozen=True)
class FlowResult:
    position: float
    elapsed: float
    status: str   # "completed" | "hit_window_boundary" | "blowup"


def _affine_forward(field: AffineField, x0: float, t: float,
                    window: tuple[float, float]) -> FlowResult:
    s, c = field.slope, field.intercept
    lo, hi = window
    if s == 0.0:
        x1 = x0 + c * t
        if c > 0.0 and x1 > hi:
            return FlowResult(hi, (hi - x0) / c, "hit_window_boundary")
        if c < 0.0 and x1 < lo:
            return FlowResult(lo, (lo - x0) / c, "hit_window_boundary")
        return FlowResult(x1, t, "completed")
    e = -c / s
    d = x0 - e
    if d == 0.0:
        return FlowResult(x0, t, "completed")
    target = hi if s * d > 0.0 else lo   # u(x0) = s * d sets the direction
    # the flow is monotone; it can only reach `target` if target lies strictly
    # between x0 and the range limit
    hit_time = np.inf
    ratio = (target - e) / d
    if ratio > 0.0:
        tau = np.log(ratio) / s
        if tau > 0.0:
            hit_time = tau
    if hit_time <= t:
        return FlowResult(target, hit_time, "hit_window_boundary")
    st = s * t
    x1 = e + d * np.exp(st) if st < 700.0 else target  # unreachable guard
    return FlowResult(float(x1), t, "completed")


def _ivp_flow(rhs, x0: float, t: float, lo: float, hi: float,
              lo_status: str, hi_status: str) -> FlowResult:
    def ev_lo(_, y):
        return y[0] - lo

    def ev_hi(_, y):
        return y[0] - hi

    ev_lo.terminal = True
    ev_hi.terminal = True
    sol = solve_ivp(rhs, (0.0, t), [x0], method="DOP853",
                    rtol=ODE_RTOL, atol=ODE_ATOL, events=(ev_lo, ev_hi))
    if not sol.success:
        raise NumericalError(f"flow integration failed: {sol.message}")
    if sol.t_events[0].size:
        return FlowResult(lo, float(sol.t_events[0][0]), lo_status)
    if sol.t_events[1].size:
        return FlowResult(hi, float(sol.t_events[1][0]), hi_status)
    return FlowResult(float(sol.y[0, -1]), t, "completed")


def flow(system: SwitchingSystem, i: int, x0: float, t: float,
         window: tuple[float, float]) -> FlowResult:
    """Integrate state i's field from x0 for duration t, stopping at the window edge."""
    if t < 0.0:
        raise DegenerateModelError("flow duration must be nonnegative")
    lo, hi = float(window[0]), float(window[1])
    if not (lo <= x0 <= hi):
        raise DegenerateModelError(f"start {x0} outside window [{lo}, {hi}]")
    if t == 0.0:
        return FlowResult(float(x0), 0.0, "completed")
    f = system.fields[i]
    if isinstance(f, AffineField):
        return _affine_forward(f, float(x0), float(t), (lo, hi))
    return _ivp_flow(lambda _, y: [f(y[0])], float(x0), float(t), lo, hi,
                     "hit_window_boundary", "hit_window_boundary")


def backward_flow(system: SwitchingSystem, i: int, x0: float, t: float,
                  window: tuple[float, float]) -> FlowResult:
    """Follow the time-reversed flow of state i; flags finite-time escape as blow-up.

    The backward flow is not clamped to the window: it runs in the whole line
    and reports "blowup" once it passes an escape bound of ESCAPE_FACTOR window
    widths, which also covers genuine finite-time blow-up within tolerance.
    """
    if t < 0.0:
        raise DegenerateModelError("flow duration must be nonnegative")
    lo, hi = float(window[0]), float(window[1])
    bound = ESCAPE_FACTOR * (hi - lo) + max(abs(lo), abs(hi))
    f = system.fields[i]
    if t == 0.0:
        return FlowResult(float(x0), 0.0, "completed")
    if isinstance(f, AffineField):
        s, c = f.slope, f.intercept
        if s == 0.0:
            x1 = x0 - c * t
            if abs(x1) > bound:
                edge = bound if -c > 0.0 else -bound
                tau = (edge - x0) / (-c)
                return FlowResult(edge, float(tau), "blowup")
            return FlowResult(x1, t, "completed")
        e = -c / s
        d = x0 - e
        if d == 0.0:
            return FlowResult(x0, t, "completed")
        # |x(t) - e| = |d| exp(-s t)
        if -s > 0.0:
            tau = np.log((bound + abs(e)) / abs(d)) / (-s)
            if tau <= t:
                return FlowResult(e + np.sign(d) * (bound + abs(e)), float(tau), "blowup")
        mst = -s * t
        x1 = e + d * np.exp(mst) if mst < 700.0 else e + np.sign(d) * (bound + abs(e))
        return FlowResult(float(x1), t, "completed")
    res = _ivp_flow(lambda _, y: [-f(y[0])], float(x0), float(t), -bound, bound,
                    "blowup", "blowup")
    return res


def flow_derivative(system: SwitchingSystem, i: int, x0: float, t: float,
                    window: tuple[float, float]) -> float:
    """Spatial derivative of the time-t flow map, via the 1-d ratio identity.

    D Phi_t(x0) = u(Phi_t(x0)) / u(x0) away from critical points; at a critical
    point the variational equation gives exp(u'(x0) t) directly.
    """
    f = system.fields[i]
    u0 = float(f(x0))
    if abs(u0) <= 1e-13 * field_scale(f, window):
        return float(np.exp(float(f.derivative(x0)) * t))
    res = flow(system, i, x0, t, window)
    return float(f(res.position)) / u0


def travel_time(system: SwitchingSystem, i: int, a: float, b: float) -> float:
    """Time for state i's flow to move from a to b: integral of dx / u_i.

    Requires u_i to keep one sign on [a, b] and to point from a toward b;
    the result is positive.
    """
    if a == b:
        return 0.0
    f = system.fields[i]
    if isinstance(f, AffineField):
        s, c = f.slope, f.intercept
        if s == 0.0:
            out = (b - a) / c
        else:
            ua, ub = s * a + c, s * b + c
            if ua * ub <= 0.0:
                raise DegenerateModelError("travel range crosses a critical point")
            out = np.log(ub / ua) / s
    else:
        ua, ub = float(f(a)), float(f(b))
        if ua * ub <= 0.0 or ua * (b - a) <= 0.0:
            raise DegenerateModelError("travel range crosses a critical point")
        out, _ = quad(lambda x: 1.0 / f(x), a, b, epsabs=1e-13, epsrel=1e-11, limit=200)
    if out <= 0.0:
        raise DegenerateModelError("field points away from the requested endpoint")
    return float(out)

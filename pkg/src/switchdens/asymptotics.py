"""Density behavior at critical points: linearization, classification, fits.

The local data at an isolated critical point of a single field is the
linearization coefficient a, a safe radius free of other critical points, the
upstream limit of the backward flow, and a bound on the remainder
r(eta) = -1/u(eta) - 1/(a*eta).  The classification table turns (holding rate
vs a, endpoint case, analyticity) into the predicted limit form of the
density; the empirical fitters measure exponents and limits from grids so the
prediction can be checked from independent routes.

The series machinery used by the interior solver lives in the companion
module and is re-exported here:  taylor_B, b0_eigensystem,
solve_normal_equation, reconstruct_flux, frobenius_expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateModelError, NumericalError, UnsupportedCaseError
from .fields import critical_points
from .frobenius import (
    B0Eigen,
    FrobeniusExpansion,
    NormalEquationResult,
    _critical_index,
    b0_eigensystem,
    frobenius_expansion,
    reconstruct_flux,
    solve_normal_equation,
    taylor_B,
)

__all__ = [
    "AsymptoticForm",
    "B0Eigen",
    "ExponentFit",
    "FrobeniusExpansion",
    "LinearizationData",
    "NormalEquationResult",
    "b0_eigensystem",
    "classify_asymptotics",
    "extrapolate_to_zero",
    "fit_exponent",
    "frobenius_expansion",
    "linearize_at_critical",
    "reconstruct_flux",
    "solve_normal_equation",
    "taylor_B",
]

# |lam_c/a - 1| below this counts as the lam = a boundary row
CRITICAL_RATIO_TOL = 1e-9


@dataclass(frozen=True)
class LinearizationData:
    """Local data of one field at one of its critical points."""

    a: float          # side*u(xi + side*eta) = -a*eta + O(eta^2)
    delta: float      # no other critical point within (0, delta], side frame
    theta: float      # upstream limit of the backward flow, side frame (inf if free)
    r_inf: float      # grid bound on |r(eta)| over (0, delta]
    rho_bar0: float | None = None
    side: int = 1
    crit_index: int = 0


def linearize_at_critical(system, xi: float, *, side: int = 1,
                          window: tuple[float, float] | None = None) -> LinearizationData:
    """Measure a, delta, theta, r_inf for the field critical at xi.

    side selects the interval under analysis: +1 looks right of xi, -1 left;
    the local coordinate is eta = side*(x - xi), so a is side-independent.
    """
    if side not in (1, -1):
        raise DegenerateModelError("side must be +1 or -1")
    jc = _critical_index(system, xi)
    a = -float(system.du(jc, xi))
    if a == 0.0 or not math.isfinite(a):
        raise DegenerateModelError("degenerate tangency: u' vanishes at the critical point")

    half_window = None
    if window is not None:
        half_window = (window[1] - xi) if side == 1 else (xi - window[0])
        if half_window <= 0.0:
            raise DegenerateModelError("critical point sits on the wrong side of the window")

    # distance to the nearest other critical point of any field, this side
    gaps = []
    for i in range(system.n):
        points, _ = critical_points(system.fields[i], None)
        for p in points:
            d = side * (p - xi)
            if d > 1e-12 * (1.0 + abs(xi)):
                gaps.append(d)
    delta = min(gaps) if gaps else (half_window if half_window is not None else 1.0 + abs(xi))
    if half_window is not None:
        delta = min(delta, half_window)
    delta *= 1.0 - 1e-9   # keep the far end strictly inside

    if a < 0.0:
        # repelling: the backward flow converges to the critical point itself
        theta = 0.0
    else:
        # attracting: backward flow climbs to the next zero of the field, if any
        own, _ = critical_points(system.fields[jc], None)
        ahead = sorted(d for d in (side * (p - xi) for p in own)
                       if d > 1e-12 * (1.0 + abs(xi)))
        theta = ahead[0] if ahead else math.inf

    # r has a finite limit at a simple zero, so the sup is not hiding below the
    # grid floor; probing deeper only amplifies the 1/u cancellation noise
    etas = np.geomspace(delta * 1e-4, delta, 256)
    u_loc = side * np.asarray(system.u(jc, xi + side * etas), dtype=float)
    r = -1.0 / u_loc - 1.0 / (a * etas)
    r_inf = float(np.max(np.abs(r)))
    return LinearizationData(a, float(delta), float(theta), r_inf, None, side, jc)


@dataclass(frozen=True)
class AsymptoticForm:
    """Predicted one-sided limit form of the density at a critical point.

    kind is one of power (rho ~ c*eta^exponent), constant, log
    (rho ~ -c*ln eta), log_bounded_band (bounded above by a log, below only
    in the band cases), zero (limit 0 faster than any stated rate).
    """

    kind: str
    case: str
    bounded: bool | None
    exponent: float | None = None
    value: float | None = None
    inconclusive: bool = False
    resonant_critical: bool = False
    notes: tuple[str, ...] = ()


def classify_asymptotics(lam_c: float, a: float, case: str, analytic: bool, *,
                         rho_bar0: float | None = None) -> AsymptoticForm:
    """Decision table for the one-sided density limit at a critical point.

    lam_c is the holding rate of the critical state and a the contraction
    coefficient; case B means the point is interior to a support interval,
    case C that it is the endpoint the analysis side starts from.
    """
    if case not in ("B", "C"):
        raise ConfigError("case must be B or C")
    if not lam_c > 0.0:
        raise ConfigError("holding rate must be positive")
    if a == 0.0:
        raise DegenerateModelError("a = 0 is a degenerate tangency")

    const_val = None if rho_bar0 is None else rho_bar0 / (lam_c - a)
    if a < 0.0:
        if case == "C":
            raise UnsupportedCaseError(
                "case C cannot occur at a repelling critical point")
        return AsymptoticForm("constant", case, True, value=const_val)

    mu = lam_c / a
    if abs(mu - 1.0) < CRITICAL_RATIO_TOL:
        note = ("holding rate equals the contraction coefficient (resonant boundary)",)
        if case == "B":
            kind = "log" if analytic else "log_bounded_band"
            return AsymptoticForm(kind, case, False, resonant_critical=True, notes=note)
        if analytic:
            return AsymptoticForm("constant", case, True, resonant_critical=True, notes=note)
        return AsymptoticForm("log_bounded_band", case, None, inconclusive=True,
                              resonant_critical=True,
                              notes=note + ("nonanalytic boundary case is undetermined",))
    if mu < 1.0:
        return AsymptoticForm("power", case, False, exponent=mu - 1.0)
    if case == "B":
        return AsymptoticForm("constant", case, True, value=const_val)
    if analytic:
        return AsymptoticForm("power", case, True, exponent=mu - 1.0)
    return AsymptoticForm("zero", case, True)


@dataclass(frozen=True)
class ExponentFit:
    """Result of fitting rho(eta) on a dyadic window near a critical point."""

    exponent: float
    stderr: float
    intercept: float
    preferred: str           # "power" | "log"
    power_rel_rms: float
    log_rel_rms: float
    log_slope: float
    drift: bool
    n_used: int
    excluded: int
    notes: tuple[str, ...] = ()


def fit_exponent(etas, values, *, fit_window: tuple[float, float] | None = None,
                 min_nodes: int = 10) -> ExponentFit:
    """Least-squares exponent of rho ~ eta^m, with a log-model comparison.

    Fits ln rho against ln eta inside fit_window; also fits rho ~ c0 - c1 ln
    eta and reports which model explains the data better in relative RMS.
    drift is set when the power slope measured on the two halves of the
    window disagrees beyond its standard error, the signature of a non-power
    law masquerading as one.
    """
    etas = np.asarray(etas, dtype=float)
    values = np.asarray(values, dtype=float)
    if etas.shape != values.shape or etas.ndim != 1:
        raise ConfigError("etas and values must be matching 1-D arrays")
    sel = np.isfinite(etas) & np.isfinite(values) & (etas > 0.0)
    if fit_window is not None:
        sel &= (etas >= fit_window[0]) & (etas <= fit_window[1])
    notes = []
    pos = sel & (values > 0.0)
    excluded = int(sel.sum() - pos.sum())
    if excluded:
        notes.append(f"excluded {excluded} nonpositive density values")
    x, y = etas[pos], values[pos]
    order = np.argsort(x)
    x, y = x[order], y[order]
    n = x.shape[0]
    if n < min_nodes:
        raise NumericalError(f"need at least {min_nodes} positive nodes, have {n}")

    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    dof = max(n - 2, 1)
    denom = float(((lx - lx.mean()) ** 2).sum())
    stderr = float(np.sqrt((resid ** 2).sum() / dof / denom)) if denom > 0 else math.inf

    power_pred = np.exp(intercept + slope * lx)
    power_rel = float(np.sqrt(np.mean(((power_pred - y) / y) ** 2)))
    log_design = np.vstack([np.ones(n), -lx]).T
    (c0, c1), *_ = np.linalg.lstsq(log_design, y, rcond=None)
    log_pred = log_design @ np.array([c0, c1])
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rel = float(np.sqrt(np.mean(((log_pred - y) / y) ** 2)))

    half = n // 2
    s1 = np.polyfit(lx[:half], ly[:half], 1)[0] if half >= 3 else slope
    s2 = np.polyfit(lx[half:], ly[half:], 1)[0] if n - half >= 3 else slope
    drift = abs(s1 - s2) > max(0.05, 6.0 * stderr)
    preferred = "log" if log_rel < power_rel else "power"
    if drift:
        notes.append(f"power slope drifts across the window ({s1:.3f} vs {s2:.3f})")
    return ExponentFit(float(slope), stderr, float(intercept), preferred,
                       power_rel, log_rel, float(c1), drift, n, excluded, tuple(notes))


def extrapolate_to_zero(xs, ys, *, n_points: int = 5) -> tuple[float, float]:
    """Polynomial (Neville) extrapolation of y(x) to x = 0 from the smallest nodes.

    Returns (limit, error estimate); the estimate is the last Neville
    correction, the usual proxy for the extrapolation error.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]
    m = min(n_points, xs.shape[0])
    if m < 2:
        raise NumericalError("extrapolation needs at least two nodes")
    x = xs[:m]
    t = ys[:m].copy()
    last = t[0]
    for level in range(1, m):
        for k in range(m - level):
            t[k] = t[k + 1] + (t[k] - t[k + 1]) * x[k + level] / (x[k + level] - x[k])
        last_corr = abs(t[0] - last)
        last = t[0]
    return float(t[0]), float(last_corr)

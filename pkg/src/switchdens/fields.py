"""Scalar vector fields driving each state of a switching system.

Three kinds are supported: affine, polynomial (ascending coefficients), and
tabulated-with-interpolation. All evaluate on scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .errors import DegenerateModelError, DiagnosticError, UnsupportedCaseError

__all__ = [
    "AffineField",
    "PolynomialField",
    "TabulatedField",
    "VectorField",
    "critical_points",
    "field_scale",
    "taylor_coeffs",
]

SCAN_RESOLUTION = 4096   # sign-change scan grid for tabulated fields (2**12)
REFINE_TOL = 1e-13       # root refinement tolerance, relative to window width
CLUSTER_TOL = 1e-9       # root dedup distance, relative to window width


@dataclass(frozen=True)
class AffineField:
    """u(x) = slope * x + intercept."""

    slope: float
    intercept: float

    def __call__(self, x):
        return self.slope * x + self.intercept

    def derivative(self, x):
        return self.slope * np.ones_like(np.asarray(x, dtype=float))

    @property
    def analytic(self) -> bool:
        return True


@dataclass(frozen=True)
class PolynomialField:
    """Polynomial field with ascending coefficients: u(x) = sum c_k x^k."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        coefs = tuple(float(c) for c in self.coefficients)
        if not coefs:
            raise DegenerateModelError("polynomial field needs at least one coefficient")
        object.__setattr__(self, "coefficients", coefs)

    def __call__(self, x):
        return npoly.polyval(x, self.coefficients)

    def derivative(self, x):
        return npoly.polyval(x, npoly.polyder(self.coefficients))

    @property
    def analytic(self) -> bool:
        return True


@dataclass(frozen=True)
class TabulatedField:
    """Field given by samples, evaluated through an interpolating spline.

    smoothness "C2" uses a cubic spline, "C1" a monotone-friendly pchip.
    declared_critical_points, when given, is cross-checked against the roots
    found by scanning; any mismatch raises instead of passing silently.
    """

    xs: tuple[float, ...]
    values: tuple[float, ...]
    smoothness: str = "C2"
    declared_critical_points: tuple[float, ...] | None = None

    def __post_init__(self):
        xs = tuple(float(v) for v in self.xs)
        vals = tuple(float(v) for v in self.values)
        if len(xs) != len(vals) or len(xs) < 4:
            raise DegenerateModelError("tabulated field needs >= 4 aligned samples")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise DegenerateModelError("tabulated field sample grid must be increasing")
        if self.smoothness not in ("C1", "C2"):
            raise DegenerateModelError(f"unknown smoothness class {self.smoothness!r}")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", vals)
        if self.declared_critical_points is not None:
            object.__setattr__(
                self, "declared_critical_points",
                tuple(float(v) for v in self.declared_critical_points),
            )

    def _spline(self):
        cls = CubicSpline if self.smoothness == "C2" else PchipInterpolator
        return cls(np.asarray(self.xs), np.asarray(self.values))

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        lo, hi = self.xs[0], self.xs[-1]
        if np.any(xa < lo) or np.any(xa > hi):
            raise DegenerateModelError(
                f"tabulated field evaluated outside its sample range [{lo}, {hi}]"
            )
        out = self._spline()(xa)
        return float(out) if np.isscalar(x) else out

    def derivative(self, x):
        out = self._spline().derivative()(np.asarray(x, dtype=float))
        return float(out) if np.isscalar(x) else out

    @property
    def analytic(self) -> bool:
        return False


VectorField = AffineField | PolynomialField | TabulatedField


def field_scale(field: VectorField, window: tuple[float, float]) -> float:
    """Typical magnitude of the field on the window, used to scale tolerances."""
    xs = np.linspace(window[0], window[1], 257)
    mag = float(np.max(np.abs(field(xs))))
    return mag if mag > 0.0 else 1.0


def taylor_coeffs(field: VectorField, center: float, order: int) -> np.ndarray:
    """Coefficients of u(center + h) as a series in h, up to h**order inclusive.

    Exact for affine and polynomial fields; tabulated fields carry no Taylor
    data and are rejected.
    """
    if isinstance(field, AffineField):
        out = np.zeros(order + 1)
        out[0] = field(center)
        if order >= 1:
            out[1] = field.slope
        return out
    if isinstance(field, PolynomialField):
        p = np.polynomial.Polynomial(field.coefficients)
        shifted = p(np.polynomial.Polynomial([center, 1.0]))
        coef = shifted.coef
        out = np.zeros(order + 1)
        take = min(order + 1, len(coef))
        out[:take] = coef[:take]
        return out
    raise UnsupportedCaseError("tabulated fields have no Taylor expansion")


def _dedupe(points: list[float], tol: float) -> list[float]:
    points = sorted(points)
    out: list[float] = []
    for p in points:
        if out and abs(p - out[-1]) <= tol:
            # keep the cluster midpoint
            out[-1] = 0.5 * (out[-1] + p)
        else:
            out.append(p)
    return out


def _poly_roots_in_window(
    field: PolynomialField, lo: float | None, hi: float | None
) -> list[float]:
    coefs = npoly.polytrim(np.asarray(field.coefficients), tol=0.0)
    if len(coefs) == 1 and coefs[0] == 0.0:
        raise DegenerateModelError("field is identically zero")
    if len(coefs) == 1:
        return []
    roots = npoly.polyroots(coefs)
    real = []
    for r in roots:
        if abs(r.imag) > 1e-8 * (1.0 + abs(r.real)):
            continue
        x = float(r.real)
        # polish with a few Newton steps
        dcoefs = npoly.polyder(coefs)
        for _ in range(4):
            fx = npoly.polyval(x, coefs)
            dfx = npoly.polyval(x, dcoefs)
            if dfx == 0.0:
                break
            step = fx / dfx
            x -= step
            if abs(step) < 1e-15 * (1.0 + abs(x)):
                break
        real.append(x)
    if real:
        spread = max(real) - min(real)
    else:
        spread = 0.0
    width = (hi - lo) if lo is not None else max(1.0, spread)
    if lo is not None:
        real = [min(max(x, lo), hi) for x in real if lo - 1e-12 * width <= x <= hi + 1e-12 * width]
    # a multiplicity-m root splits into a cluster of diameter ~eps**(1/m);
    # merge anything closer than the double-root split scale
    return _dedupe(real, max(CLUSTER_TOL, 1e-6) * width)


def _tabulated_roots_in_window(
    field: TabulatedField, lo: float | None, hi: float | None
) -> list[float]:
    if lo is None:
        lo, hi = field.xs[0], field.xs[-1]
    width = hi - lo
    xs = np.linspace(lo, hi, SCAN_RESOLUTION + 1)
    vals = np.asarray(field(xs))
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    roots: list[float] = []
    for k in range(SCAN_RESOLUTION):
        a, b = xs[k], xs[k + 1]
        fa, fb = vals[k], vals[k + 1]
        if fa == 0.0:
            roots.append(float(a))
        elif fa * fb < 0.0:
            roots.append(float(brentq(field, a, b, xtol=REFINE_TOL * width)))
    if vals[-1] == 0.0:
        roots.append(float(xs[-1]))
    roots = _dedupe(roots, CLUSTER_TOL * width)
    # a deep |u| dip without a sign change cannot be bracketed; refuse to guess
    dip = np.abs(vals) < 1e-7 * scale
    for k in np.nonzero(dip)[0]:
        x = float(xs[k])
        if not roots or min(abs(x - r) for r in roots) > 4.0 * width / SCAN_RESOLUTION:
            raise DiagnosticError(
                f"tabulated field nearly vanishes near x={x:.6g} without a sign "
                "change bracketable at the scan resolution"
            )
    if field.declared_critical_points is not None:
        declared = [p for p in field.declared_critical_points if lo <= p <= hi]
        for p in declared:
            if not roots or min(abs(p - r) for r in roots) > 1e-6 * width:
                raise DiagnosticError(
                    f"declared critical point x={p:.6g} was not recovered by scanning"
                )
        for r in roots:
            if not declared or min(abs(p - r) for p in declared) > 1e-6 * width:
                raise DiagnosticError(
                    f"found critical point x={r:.6g} that is not declared"
                )
    return roots


def critical_points(
    field: VectorField, window: tuple[float, float] | None
) -> tuple[list[float], list[int]]:
    """Zeros of the field, plus the sign of u between consecutive zeros.

    With a window, only zeros inside the closed window are reported and the
    outermost sign intervals are clipped to it. window=None means global:
    every real zero for affine and polynomial fields (the sample range for
    tabulated ones, which carry no information beyond it).

    Returns (points, signs) where signs[k] is the sign of u on the k-th
    complementary open subinterval (0 when the subinterval is empty).
    """
    if window is None:
        if isinstance(field, TabulatedField):
            lo, hi = field.xs[0], field.xs[-1]
        else:
            lo = hi = None
    else:
        lo, hi = float(window[0]), float(window[1])
        if hi <= lo:
            raise DegenerateModelError(f"empty window [{lo}, {hi}]")
    if isinstance(field, AffineField):
        if field.slope == 0.0:
            if field.intercept == 0.0:
                raise DegenerateModelError("field is identically zero")
            points: list[float] = []
        else:
            x = -field.intercept / field.slope
            points = [x] if lo is None or lo <= x <= hi else []
    elif isinstance(field, PolynomialField):
        points = _poly_roots_in_window(field, lo, hi)
    else:
        points = _tabulated_roots_in_window(field, lo, hi)
    if lo is None:
        # synthetic probe bounds just beyond the outermost roots; the sign of
        # a polynomial is constant there
        spread = (points[-1] - points[0]) if len(points) > 1 else 0.0
        pad = 1.0 + 0.5 * spread
        lo = (points[0] if points else 0.0) - pad
        hi = (points[-1] if points else 0.0) + pad
    width = hi - lo
    points = _dedupe(points, CLUSTER_TOL * width)
    bounds = [lo] + points + [hi]
    signs: list[int] = []
    for a, b in zip(bounds, bounds[1:]):
        if b - a <= 2.0 * CLUSTER_TOL * width:
            signs.append(0)
        else:
            signs.append(int(np.sign(field(0.5 * (a + b)))))
    return points, signs

"""Minimal invariant sets, critical-point cases, and the existence criterion.

The labeling algorithm marks every critical point at which all fields share a
sign and reads the minimal invariant sets off the resulting l/r sequence:
open intervals between an "l" point and its nearest labeled right neighbor
carrying "r" (kept only if the interval sees both field signs), plus one
singleton per uniformly critical point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError, UnsupportedCaseError
from .fields import AffineField, TabulatedField, critical_points, field_scale
from .flowmaps import TravelMap
from .system import SwitchingSystem

__all__ = [
    "CriticalPointCase",
    "ExistenceReport",
    "MinimalInvariantSet",
    "classify_critical_point",
    "existence_criterion",
    "minimal_invariant_sets",
    "reachability_oracle",
]

UNIFORM_TOL = 1e-12      # |u_i(xi)| <= tol * scale_i counts as an exact zero
WITNESS_DEPTH = 20       # dyadic refinement depth for sign witnesses
ENDPOINT_MATCH = 1e-9    # endpoint identification tolerance, relative


@dataclass(frozen=True)
class MinimalInvariantSet:
    """Open interval (left, right) or singleton {left == right}.

    Infinite endpoints are genuine +-inf. A truncated flag means the analysis
    window (or a tabulated field's sample range) ended before any labeled
    critical point was seen on that side: the set extends at least to the
    recorded edge and its true endpoint is unknown beyond it.
    """

    kind: str                 # "open_interval" | "singleton"
    left: float
    right: float
    left_is_critical: bool = False
    right_is_critical: bool = False
    left_truncated: bool = False
    right_truncated: bool = False
    left_edge: float | None = None
    right_edge: float | None = None

    @property
    def point(self) -> float:
        if self.kind != "singleton":
            raise ValueError("point is defined only for singletons")
        return self.left

    def contains(self, x: float) -> bool:
        if self.kind == "singleton":
            return x == self.left
        return self.left < x < self.right

    def solve_range(self, window: tuple[float, float]) -> tuple[float, float]:
        """Numeric sub-interval used by the solvers."""
        lo = self.left if math.isfinite(self.left) else window[0]
        hi = self.right if math.isfinite(self.right) else window[1]
        return max(lo, window[0]), min(hi, window[1])


@dataclass(frozen=True)
class CriticalPointCase:
    point: float
    field_index: int
    case: str                 # "A" | "B" | "C"
    side: str                 # "left_of_support_gap" | "interior" | "left_endpoint"
    analysis_side: str        # "right" | "left"
    mirrored: bool            # True when the left side was classified


@dataclass(frozen=True)
class ExistenceReport:
    """Sufficient mean-contraction criterion for an invariant measure.

    exists is None when some field has no known global contraction rate;
    False only means the criterion did not fire, not nonexistence.
    """

    jump_chain_stationary: tuple[float, ...]
    contraction_coefficients: tuple[float | None, ...]
    mean_contraction: float | None
    exists: bool | None
    notes: tuple[str, ...] = ()


def _labeling_points(system: SwitchingSystem, window: tuple[float, float]):
    """Sorted union of all fields' critical points plus per-point field hits.

    Affine and polynomial fields contribute every real zero; tabulated fields
    only what their sample range shows (knowledge horizon reported back).
    """
    lo, hi = float(window[0]), float(window[1])
    horizon_lo, horizon_hi = -math.inf, math.inf
    pts: list[float] = []
    for f in system.fields:
        p, _ = critical_points(f, None)
        pts.extend(p)
        if isinstance(f, TabulatedField):
            horizon_lo = max(horizon_lo, max(f.xs[0], lo))
            horizon_hi = min(horizon_hi, min(f.xs[-1], hi))
    pts = sorted(pts)
    span = max(hi - lo, (pts[-1] - pts[0]) if len(pts) > 1 else 0.0, 1.0)
    merged: list[float] = []
    for p in pts:
        if merged and abs(p - merged[-1]) <= 1e-9 * span:
            merged[-1] = 0.5 * (merged[-1] + p)
        else:
            merged.append(p)
    if math.isfinite(horizon_lo):
        merged = [p for p in merged if horizon_lo <= p <= horizon_hi]
    return merged, (horizon_lo, horizon_hi), span


def _witness_search(system, a: float, b: float, depth: int) -> tuple[bool, bool]:
    """Look for u_i > 0 and u_j < 0 somewhere in (a, b), dyadically refined."""
    found_pos = found_neg = False
    for d in range(depth + 1):
        k = np.arange(2**d)
        xs = a + (2 * k + 1) * (b - a) / 2 ** (d + 1)
        for f in system.fields:
            vals = np.asarray(f(xs))
            found_pos = found_pos or bool(np.any(vals > 0.0))
            found_neg = found_neg or bool(np.any(vals < 0.0))
            if found_pos and found_neg:
                return True, True
    return found_pos, found_neg


def minimal_invariant_sets(
    system: SwitchingSystem,
    window: tuple[float, float],
    *,
    uniform_tol: float = UNIFORM_TOL,
    witness_depth: int = WITNESS_DEPTH,
) -> list[MinimalInvariantSet]:
    lo, hi = float(window[0]), float(window[1])
    pts, (horizon_lo, horizon_hi), span = _labeling_points(system, window)
    scales = [field_scale(f, window) for f in system.fields]
    tols = [uniform_tol * s for s in scales]

    # step 1+2: the label sequence, with +-inf standing in for the ends
    labeled: list[tuple[float, set[str]]] = [(-math.inf, {"l"})]
    singles: list[float] = []
    for xi in pts:
        vals = [float(f(xi)) for f in system.fields]
        labels = set()
        if all(v >= -t for v, t in zip(vals, tols)):
            labels.add("l")
        if all(v <= t for v, t in zip(vals, tols)):
            labels.add("r")
        if labels == {"l", "r"}:
            singles.append(xi)
        if labels:
            labeled.append((xi, labels))
    labeled.append((math.inf, {"r"}))

    # step 3: candidate intervals from each "l" point to its right neighbor
    out: list[MinimalInvariantSet] = []
    for k, (p, labs) in enumerate(labeled[:-1]):
        if "l" not in labs:
            continue
        q, qlabs = labeled[k + 1]
        if "r" not in qlabs:
            continue
        # bounded probe hull for the sign-witness search
        pad = max(1.0, 0.1 * span)
        finite = [x for x, _ in labeled if math.isfinite(x)] + [lo, hi]
        a = p if math.isfinite(p) else min(finite) - pad
        b = q if math.isfinite(q) else max(finite) + pad
        if math.isfinite(horizon_lo):
            # tabulated fields cannot be probed beyond their sample range
            a, b = max(a, horizon_lo), min(b, horizon_hi)
        if b <= a:
            continue
        has_pos, has_neg = _witness_search(system, a, b, witness_depth)
        if not (has_pos and has_neg):
            continue
        left_trunc = p == -math.inf and math.isfinite(horizon_lo)
        right_trunc = q == math.inf and math.isfinite(horizon_hi)
        out.append(MinimalInvariantSet(
            kind="open_interval",
            left=p,
            right=q,
            left_is_critical=math.isfinite(p),
            right_is_critical=math.isfinite(q),
            left_truncated=left_trunc,
            right_truncated=right_trunc,
            left_edge=horizon_lo if left_trunc else None,
            right_edge=horizon_hi if right_trunc else None,
        ))
    for xi in singles:
        out.append(MinimalInvariantSet(
            kind="singleton", left=xi, right=xi,
            left_is_critical=True, right_is_critical=True,
        ))
    out.sort(key=lambda s: (s.left, s.right))
    return out


def _critical_field_index(system, xi: float, window, uniform_tol: float) -> int:
    hits = [
        i for i, f in enumerate(system.fields)
        if abs(float(f(xi))) <= uniform_tol * field_scale(f, window)
    ]
    if not hits:
        raise DegenerateModelError(f"{xi} is not a critical point of any field")
    if len(hits) > 1:
        raise UnsupportedCaseError(
            f"{xi} is critical for fields {hits}; classification assumes a single one"
        )
    return hits[0]


def classify_critical_point(
    system: SwitchingSystem,
    xi: float,
    sets: list[MinimalInvariantSet],
    *,
    side: str = "right",
    window: tuple[float, float] | None = None,
    uniform_tol: float = 1e-9,
) -> CriticalPointCase:
    """Trichotomy at xi, looking toward the given side.

    A: that side starts a support-free gap. B: xi is interior to a minimal
    invariant interval. C: the support interval begins on that side (when the
    left side is asked, the configuration is mirrored onto the canonical
    left-endpoint picture).
    """
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    if window is None:
        window = (xi - 1.0, xi + 1.0)
    idx = _critical_field_index(system, xi, window, uniform_tol)
    intervals = [s for s in sets if s.kind == "open_interval"]
    tol = ENDPOINT_MATCH * (1.0 + abs(xi))
    for s in intervals:
        if s.left + tol < xi < s.right - tol:
            return CriticalPointCase(xi, idx, "B", "interior", side, False)
    if side == "right":
        starts = any(abs(s.left - xi) <= tol for s in intervals)
        if starts:
            return CriticalPointCase(xi, idx, "C", "left_endpoint", "right", False)
        return CriticalPointCase(xi, idx, "A", "left_of_support_gap", "right", False)
    ends = any(abs(s.right - xi) <= tol for s in intervals)
    if ends:
        return CriticalPointCase(xi, idx, "C", "left_endpoint", "left", True)
    return CriticalPointCase(xi, idx, "A", "left_of_support_gap", "left", True)


def existence_criterion(
    system: SwitchingSystem,
    declared_alphas: dict[int, float] | None = None,
) -> ExistenceReport:
    """Mean-contraction sufficient criterion: sum_i nu_i alpha_i > 0.

    nu is the stationary law of the driving chain. alpha_i is the global
    exponential flow-contraction rate, known exactly for affine fields
    (u = s x + c contracts at -s); other fields need a declared rate.
    """
    nu = tuple(float(v) for v in system.rates.stationary_law)
    alphas: list[float | None] = []
    notes: list[str] = []
    for i, f in enumerate(system.fields):
        if declared_alphas is not None and i in declared_alphas:
            alphas.append(float(declared_alphas[i]))
        elif isinstance(f, AffineField):
            alphas.append(-f.slope)
        else:
            alphas.append(None)
            notes.append(
                f"state {i}: no global contraction rate known for a "
                f"{type(f).__name__}; criterion inconclusive"
            )
    if any(a is None for a in alphas):
        return ExistenceReport(nu, tuple(alphas), None, None, tuple(notes))
    mean = float(sum(n * a for n, a in zip(nu, alphas)))
    return ExistenceReport(nu, tuple(alphas), mean, mean > 0.0, tuple(notes))


def reachability_oracle(
    system: SwitchingSystem,
    from_pos: float,
    to_window: tuple[float, float],
    budget: int,
    rng_seed: int,
    *,
    domain: tuple[float, float] | None = None,
    replicas: int = 4,
) -> bool:
    """Randomized search for a composed flow landing inside to_window.

    True is a certificate (every leg is a genuine flow segment and partial
    legs are themselves valid switching times); False only means no path was
    found within the budget. Legs mix target-directed moves, exact
    travel-time hits, and stratified random durations so that short and long
    excursions are both explored.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    wlo, whi = float(to_window[0]), float(to_window[1])
    if whi <= wlo:
        raise ValueError("empty target window")
    if domain is None:
        pts = []
        for f in system.fields:
            p, _ = critical_points(f, None)
            pts.extend(p)
        hull = pts + [from_pos, wlo, whi]
        spread = max(hull) - min(hull)
        pad = 2.0 * (1.0 + spread)
        domain = (min(hull) - pad, max(hull) + pad)
    tm = TravelMap(system, domain)
    scale = np.mean([field_scale(f, domain) for f in system.fields])
    t_char = (domain[1] - domain[0]) / (len(system.fields) * max(scale, 1e-12))
    layers = (0.003, 0.03, 0.3, 3.0)

    n = len(system.fields)
    per_rep = max(1, budget // replicas)
    seeds = np.random.SeedSequence(rng_seed).spawn(replicas)
    for seed in seeds:
        rng = np.random.default_rng(seed)
        x = float(from_pos)
        for step in range(per_rep):
            if wlo < x < whi:
                return True
            target = rng.uniform(wlo, whi)
            speeds = np.array([float(f(x)) for f in system.fields])
            directed = [i for i in range(n) if speeds[i] * (target - x) > 0.0]
            moving = [i for i in range(n) if speeds[i] != 0.0]
            if not moving:
                break   # uniformly critical point: stuck
            if directed and rng.random() < 0.8:
                i = int(rng.choice(directed))
            else:
                i = int(rng.choice(moving))
            dt = None
            if speeds[i] * (target - x) > 0.0:
                try:
                    piece = tm.piece_for(i, x)
                except DegenerateModelError:
                    piece = None
                if piece is not None and piece.a < target < piece.b:
                    tau = tm.travel_time(i, x, target)
                    if math.isfinite(tau) and tau >= 0.0 and rng.random() < 0.5:
                        dt = tau
            if dt is None:
                dt = layers[step % len(layers)] * t_char * rng.exponential()
            x = tm.advance(i, x, dt).position
        if wlo < x < whi:
            return True
    return False

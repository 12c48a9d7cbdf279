"""Event-driven simulation of the switching flow and occupation histograms.

A trajectory alternates exponential holding periods with instantaneous state
switches; between switches the position follows the active field's flow.
Occupation time is deposited into bins exactly, via differences of the travel
integral W at bin edges (dW/dt = 1 along the flow), so a single pass over the
event stream yields bin masses with no quadrature error.  Affine systems run
through a compiled kernel; the interpreted path is the reference
implementation and handles arbitrary fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, DegenerateModelError
from .fields import AffineField
from .flowmaps import TravelMap
from .system import SwitchingSystem

__all__ = [
    "EnsembleStats",
    "OccupationHistogram",
    "SimConfig",
    "SimResult",
    "estimate_density",
    "holding_time_from_uniform",
    "next_state",
    "occupation_density",
    "sample_holding_time",
    "simulate",
]

# smallest uniform draw fed to the log; caps holding times at ~690/rate
_U_FLOOR = 1e-300


@dataclass(frozen=True)
class SimConfig:
    """Run parameters shared by every replica of a simulation."""

    seed: int
    t_max: float
    burn_in: float = 0.0
    max_switches: int = 10**9
    replicas: int = 1

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not self.t_max > 0.0:
            raise ConfigError("t_max must be positive")
        if not 0.0 <= self.burn_in < self.t_max:
            raise ConfigError("burn_in must lie in [0, t_max)")
        if self.max_switches < 1:
            raise ConfigError("max_switches must be at least 1")
        if self.replicas < 1:
            raise ConfigError("replicas must be at least 1")


def holding_time_from_uniform(rate: float, u: float) -> float:
    """Inverse-CDF holding time -ln(u)/rate for a uniform draw u in (0, 1]."""
    if not 0.0 < u <= 1.0:
        raise ConfigError("uniform draw must lie in (0, 1]")
    return -math.log(u) / rate


def sample_holding_time(system: SwitchingSystem, i: int, rng: np.random.Generator) -> float:
    u = rng.random()
    return holding_time_from_uniform(system.rates.holding[i], max(u, _U_FLOOR))


def _jump_cdf(system: SwitchingSystem) -> np.ndarray:
    cdf = np.cumsum(system.rates.jump_probs, axis=1)
    cdf[:, -1] = 1.0  # guard rounding so every draw lands in a cell
    return cdf


def next_state(system: SwitchingSystem, i: int, rng: np.random.Generator) -> int:
    """Draw the post-switch state from row i of the jump chain."""
    u = rng.random()
    return int(np.searchsorted(_jump_cdf(system)[i], u, side="left"))


@dataclass(frozen=True)
class SimResult:
    """One replica's event stream: switches, positions, and the final state.

    Segment k runs from times[k-1] to times[k] in from_states[k], ending at
    positions[k]; the stream starts at (0, start_state, start_position) and a
    window exit truncates the final segment before t_max.
    """

    start_position: float
    start_state: int
    times: np.ndarray
    positions: np.ndarray
    from_states: np.ndarray
    to_states: np.ndarray
    final_time: float
    final_state: int
    final_position: float
    exited: bool

    @property
    def switch_count(self) -> int:
        return int(self.times.shape[0])

    def segments(self):
        """Yield (t_start, t_end, state, x_start, x_end) per flow segment."""
        t, i, x = 0.0, self.start_state, self.start_position
        for k in range(self.times.shape[0]):
            yield t, float(self.times[k]), int(self.from_states[k]), x, float(self.positions[k])
            t, i, x = float(self.times[k]), int(self.to_states[k]), float(self.positions[k])
        if self.final_time > t:
            yield t, self.final_time, i, x, self.final_position


def simulate(system: SwitchingSystem, x0: float, i0: int, config: SimConfig,
             window: tuple[float, float], *, rng: np.random.Generator | None = None) -> SimResult:
    """Run one replica on the interpreted path, recording every switch.

    Each step consumes exactly two uniform draws, holding time then jump
    target, so distinct backends fed the same generator reproduce the same
    event stream.  max_switches stops the run early; leaving the window
    terminates it with the exit position as the final state.
    """
    if not 0 <= i0 < system.n:
        raise ConfigError("start state out of range")
    if not window[0] <= x0 <= window[1]:
        raise ConfigError("start position outside window")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    tm = TravelMap(system, window)
    cdf = _jump_cdf(system)

    times: list[float] = []
    positions: list[float] = []
    from_states: list[int] = []
    to_states: list[int] = []

    t, i, x = 0.0, i0, x0
    exited = False
    while t < config.t_max:
        tau = sample_holding_time(system, i, rng)
        seg = min(tau, config.t_max - t)
        leg = tm.advance(i, x, seg)
        if leg.status == "hit_window_boundary":
            t += leg.time_used
            x = leg.position
            exited = True
            break
        t += seg
        x = leg.position
        if t >= config.t_max:
            break
        u = rng.random()
        j = int(np.searchsorted(cdf[i], u, side="left"))
        times.append(t)
        positions.append(x)
        from_states.append(i)
        to_states.append(j)
        i = j
        if len(times) >= config.max_switches:
            break
    return SimResult(
        start_position=x0,
        start_state=i0,
        times=np.asarray(times, dtype=float),
        positions=np.asarray(positions, dtype=float),
        from_states=np.asarray(from_states, dtype=np.int64),
        to_states=np.asarray(to_states, dtype=np.int64),
        final_time=t,
        final_state=i,
        final_position=x,
        exited=exited,
    )


@dataclass
class OccupationHistogram:
    """Per-state occupation times over shared bin edges.

    below/above collect time spent outside the edge range; total time is
    conserved exactly, so the three parts always sum to the deposited span.
    """

    edges: np.ndarray
    occupation: np.ndarray   # (n_states, n_bins)
    below: np.ndarray        # (n_states,)
    above: np.ndarray        # (n_states,)

    @property
    def total_time(self) -> float:
        return float(self.occupation.sum() + self.below.sum() + self.above.sum())

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def density(self) -> np.ndarray:
        """Joint density estimate: occupation / (total time * bin width)."""
        t = self.total_time
        if t == 0.0:
            return np.zeros_like(self.occupation)
        return self.occupation / (t * self.widths[None, :])

    def merge(self, other: "OccupationHistogram") -> "OccupationHistogram":
        if not np.array_equal(self.edges, other.edges):
            raise ConfigError("histograms use different bin edges")
        return OccupationHistogram(
            edges=self.edges,
            occupation=self.occupation + other.occupation,
            below=self.below + other.below,
            above=self.above + other.above,
        )

    @classmethod
    def empty(cls, n_states: int, edges: np.ndarray) -> "OccupationHistogram":
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or edges.shape[0] < 2 or np.any(np.diff(edges) <= 0.0):
            raise ConfigError("bin edges must be a strictly increasing 1-D array")
        n_bins = edges.shape[0] - 1
        return cls(edges, np.zeros((n_states, n_bins)), np.zeros(n_states), np.zeros(n_states))


def _deposit_segment(pm, i: int, x_a: float, x_b: float, dt: float,
                     hist: OccupationHistogram) -> None:
    """Add dt of state-i time to hist, split across bins by W differences."""
    edges, occ = hist.edges, hist.occupation
    n_bins = edges.shape[0] - 1
    lo, hi = (x_a, x_b) if x_a <= x_b else (x_b, x_a)
    total = 0.0
    if lo < hi:
        if lo < edges[0]:
            cap = min(hi, float(edges[0]))
            t_out = abs(float(pm.W(cap)) - float(pm.W(lo)))
            hist.below[i] += t_out
            total += t_out
        if hi > edges[-1]:
            cap = max(lo, float(edges[-1]))
            t_out = abs(float(pm.W(hi)) - float(pm.W(cap)))
            hist.above[i] += t_out
            total += t_out
        ka = max(int(np.searchsorted(edges, lo, side="right")) - 1, 0)
        kb = min(int(np.searchsorted(edges, hi, side="left")) - 1, n_bins - 1)
        if kb >= ka:
            clipped = np.clip(edges[ka:kb + 2], lo, hi)
            per_bin = np.abs(np.diff(pm.W(clipped)))
            occ[i, ka:kb + 1] += per_bin
            total += float(per_bin.sum())
    # conservation: rounding and the sliver beside a critical end go to the
    # bin holding the segment's final position
    rem = dt - total
    kf = int(np.searchsorted(edges, x_b, side="right")) - 1
    if kf < 0:
        hist.below[i] += rem
    elif kf >= n_bins:
        hist.above[i] += rem
    else:
        occ[i, kf] += rem


def occupation_density(system: SwitchingSystem, result: SimResult, edges,
                       window: tuple[float, float], *, burn_in: float = 0.0) -> OccupationHistogram:
    """Bin the occupation time of one event stream, discarding [0, burn_in)."""
    hist = OccupationHistogram.empty(system.n, edges)
    tm = TravelMap(system, window)
    for t_a, t_b, i, x_a, x_b in result.segments():
        if t_b <= burn_in:
            continue
        if t_a < burn_in:
            x_a = tm.advance(i, x_a, burn_in - t_a).position
            t_a = burn_in
        if x_a == x_b:
            _point_deposit(hist, i, x_b, t_b - t_a)
            continue
        pm = tm.piece_for(i, 0.5 * (x_a + x_b))
        _deposit_segment(pm, i, x_a, x_b, t_b - t_a, hist)
    return hist


def _point_deposit(hist: OccupationHistogram, i: int, x: float, dt: float) -> None:
    kf = int(np.searchsorted(hist.edges, x, side="right")) - 1
    if kf < 0:
        hist.below[i] += dt
    elif kf >= hist.edges.shape[0] - 1:
        hist.above[i] += dt
    else:
        hist.occupation[i, kf] += dt


# ---------------------------------------------------------------------------
# compiled affine path

@njit(cache=True)
def _w_affine(s, c, x):
    if s == 0.0:
        return x / c
    v = abs(s * x + c)
    if v < 1e-300:
        v = 1e-300
    return math.log(v) / s


@njit(cache=True)
def _deposit_affine(s, c, x_a, x_b, dt, edges, occ, below, above, i):
    n_bins = edges.shape[0] - 1
    lo = x_a if x_a <= x_b else x_b
    hi = x_b if x_a <= x_b else x_a
    total = 0.0
    if lo < hi:
        if lo < edges[0]:
            cap = hi if hi < edges[0] else edges[0]
            t_out = abs(_w_affine(s, c, cap) - _w_affine(s, c, lo))
            below[i] += t_out
            total += t_out
        if hi > edges[n_bins]:
            cap = lo if lo > edges[n_bins] else edges[n_bins]
            t_out = abs(_w_affine(s, c, hi) - _w_affine(s, c, cap))
            above[i] += t_out
            total += t_out
        ka = np.searchsorted(edges, lo, side="right") - 1
        kb = np.searchsorted(edges, hi, side="left") - 1
        if ka < 0:
            ka = 0
        if kb > n_bins - 1:
            kb = n_bins - 1
        for k in range(ka, kb + 1):
            a = edges[k] if edges[k] > lo else lo
            b = edges[k + 1] if edges[k + 1] < hi else hi
            if b > a:
                t_bin = abs(_w_affine(s, c, b) - _w_affine(s, c, a))
                occ[i, k] += t_bin
                total += t_bin
    rem = dt - total
    kf = np.searchsorted(edges, x_b, side="right") - 1
    if kf < 0:
        below[i] += rem
    elif kf >= n_bins:
        above[i] += rem
    else:
        occ[i, kf] += rem


@njit(cache=True)
def _advance_affine(s, c, x, dt, w_lo, w_hi):
    """Exact affine flow step; returns (x1, time used, hit window flag)."""
    if s == 0.0:
        x1 = x + c * dt
    else:
        xc = -c / s
        x1 = xc + (x - xc) * math.exp(s * dt)
    if x1 > w_hi:
        used = _w_affine(s, c, w_hi) - _w_affine(s, c, x)
        if used < 0.0:
            used = 0.0
        elif used > dt:
            used = dt
        return w_hi, used, True
    if x1 < w_lo:
        used = _w_affine(s, c, w_lo) - _w_affine(s, c, x)
        if used < 0.0:
            used = 0.0
        elif used > dt:
            used = dt
        return w_lo, used, True
    return x1, dt, False


@njit(cache=True)
def _affine_run(rng, x0, i0, t_max, burn_in, max_switches,
                slopes, cepts, rates, jump_cdf, edges, w_lo, w_hi,
                occ, below, above):
    """Fused event loop and deposit for all-affine systems.

    Draw protocol matches simulate(): one uniform for each holding time, one
    for each jump.  The segment straddling burn_in is split so only its tail
    is deposited.
    """
    x = x0
    i = i0
    t = 0.0
    n_sw = 0
    exited = False
    while t < t_max:
        u1 = rng.random()
        if u1 < 1e-300:
            u1 = 1e-300
        tau = -math.log(u1) / rates[i]
        t_end = t + tau
        capped = False
        if t_end >= t_max:
            t_end = t_max
            capped = True
        while t < t_end:
            if t < burn_in:
                sub = (burn_in if burn_in < t_end else t_end) - t
                dep = False
            else:
                sub = t_end - t
                dep = True
            x1, used, hit = _advance_affine(slopes[i], cepts[i], x, sub, w_lo, w_hi)
            if dep and used > 0.0:
                _deposit_affine(slopes[i], cepts[i], x, x1, used, edges, occ, below, above, i)
            t += used
            x = x1
            if hit:
                exited = True
                return x, i, t, n_sw, exited
        if capped:
            break
        u2 = rng.random()
        j = 0
        while jump_cdf[i, j] < u2:
            j += 1
        i = j
        n_sw += 1
        if n_sw >= max_switches:
            break
    return x, i, t, n_sw, exited


@dataclass(frozen=True)
class EnsembleStats:
    """Per-replica diagnostics from estimate_density."""

    method: str
    switch_counts: np.ndarray
    final_times: np.ndarray
    final_states: np.ndarray
    final_positions: np.ndarray
    exit_flags: np.ndarray

    @property
    def total_switches(self) -> int:
        return int(self.switch_counts.sum())

    @property
    def exit_count(self) -> int:
        return int(self.exit_flags.sum())


def _affine_tables(system: SwitchingSystem):
    slopes = np.array([f.slope for f in system.fields], dtype=float)
    cepts = np.array([f.intercept for f in system.fields], dtype=float)
    return slopes, cepts


def estimate_density(system: SwitchingSystem, x0: float, i0: int, config: SimConfig,
                     edges, window: tuple[float, float] | None = None, *,
                     method: str = "auto") -> tuple[OccupationHistogram, EnsembleStats]:
    """Merge replica occupation histograms into one density estimate.

    Replicas draw from independent streams spawned off config.seed, so the
    result is reproducible for a fixed config and invariant to the backend.
    method: "auto" picks the compiled kernel for all-affine systems,
    "reference" forces the interpreted path, "kernel" requires affine fields.
    """
    edges = np.asarray(edges, dtype=float)
    if window is None:
        window = (float(edges[0]), float(edges[-1]))
    if method not in ("auto", "kernel", "reference"):
        raise ConfigError("method must be auto, kernel, or reference")
    all_affine = all(isinstance(f, AffineField) for f in system.fields)
    if method == "kernel" and not all_affine:
        raise ConfigError("compiled kernel requires affine fields")
    use_kernel = method == "kernel" or (method == "auto" and all_affine)

    hist = OccupationHistogram.empty(system.n, edges)
    counts = np.zeros(config.replicas, dtype=np.int64)
    f_times = np.zeros(config.replicas)
    f_states = np.zeros(config.replicas, dtype=np.int64)
    f_pos = np.zeros(config.replicas)
    exits = np.zeros(config.replicas, dtype=bool)

    children = np.random.SeedSequence(config.seed).spawn(config.replicas)
    if use_kernel:
        slopes, cepts = _affine_tables(system)
        rates = system.rates.holding
        cdf = _jump_cdf(system)
        for r, child in enumerate(children):
            rng = np.random.Generator(np.random.PCG64(child))
            x, i, t, n_sw, exited = _affine_run(
                rng, float(x0), int(i0), config.t_max, config.burn_in,
                config.max_switches, slopes, cepts, rates, cdf,
                hist.edges, float(window[0]), float(window[1]),
                hist.occupation, hist.below, hist.above)
            counts[r], f_times[r], f_states[r], f_pos[r], exits[r] = n_sw, t, i, x, exited
        stats = EnsembleStats("affine_kernel", counts, f_times, f_states, f_pos, exits)
    else:
        for r, child in enumerate(children):
            rng = np.random.Generator(np.random.PCG64(child))
            res = simulate(system, x0, i0, config, window, rng=rng)
            hist = hist.merge(occupation_density(system, res, edges, window,
                                                 burn_in=config.burn_in))
            counts[r], f_times[r] = res.switch_count, res.final_time
            f_states[r], f_pos[r], exits[r] = res.final_state, res.final_position, res.exited
        stats = EnsembleStats("reference", counts, f_times, f_states, f_pos, exits)
    return hist, stats

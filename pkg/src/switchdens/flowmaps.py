"""Cumulative travel maps: fast flow and travel-time lookups per state.

For each state the window splits at that field's critical points into pieces
where u keeps one sign. On a piece the cumulative travel integral
W(x) = int dx' / u(x') advances at unit rate along the flow (dW/dt = 1), so
flowing for a duration dt is W-addition plus monotone inversion, and the time
spent between two positions is a W-difference. Affine pieces use the closed
form; other fields use graded tables with per-cell Gauss-Legendre sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError
from .fields import AffineField
from .meshes import graded_nodes
from .system import SwitchingSystem

__all__ = ["PieceMap", "TravelMap", "LegResult"]

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class LegResult:
    """Outcome of flowing along one piece for a requested duration."""

    position: float
    time_used: float
    swept_lo: float
    swept_hi: float
    status: str   # "completed" | "asymptotic" | "hit_window_boundary"


def _cell_travel(f, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gauss-Legendre integral of 1/u over each cell [a_k, b_k]."""
    mid = 0.5 * (a + b)[:, None]
    half = 0.5 * (b - a)[:, None]
    pts = mid + half * GL_NODES[None, :]
    vals = 1.0 / f(pts)
    return (vals * GL_WEIGHTS[None, :]).sum(axis=1) * half[:, 0]


class PieceMap:
    """Travel map on one sign-constant piece (a, b) of one field."""

    def __init__(self, f, a: float, b: float, *, a_critical: bool, b_critical: bool,
                 min_offset: float, n_cells: int):
        self.f = f
        self.a = a
        self.b = b
        self.a_critical = a_critical
        self.b_critical = b_critical
        self.affine = isinstance(f, AffineField)
        self.sign = 1.0 if f(0.5 * (a + b)) > 0.0 else -1.0
        if self.affine:
            eps = 1e-13 * (b - a)
            self.a_eff = a + (eps if a_critical else 0.0)
            self.b_eff = b - (eps if b_critical else 0.0)
            self.xs = None
            self.ws = None
        else:
            h_max = (b - a) / n_cells
            self.xs = graded_nodes(a, b, left_singular=a_critical,
                                   right_singular=b_critical,
                                   min_offset=min_offset, h_max=h_max)
            travel = _cell_travel(f, self.xs[:-1], self.xs[1:])
            self.ws = np.concatenate([[0.0], np.cumsum(travel)])
            self.a_eff = float(self.xs[0])
            self.b_eff = float(self.xs[-1])

    def contains(self, x: float) -> bool:
        return self.a <= x <= self.b

    def clamp(self, x: float) -> float:
        return min(max(x, self.a_eff), self.b_eff)

    def W(self, x):
        """Cumulative travel integral; equals elapsed time along the flow."""
        if self.affine:
            s, c = self.f.slope, self.f.intercept
            if s == 0.0:
                return np.asarray(x, dtype=float) / c
            return np.log(np.abs(s * np.asarray(x, dtype=float) + c)) / s
        return np.interp(x, self.xs, self.ws)

    def invert_W(self, w):
        if self.affine:
            s, c = self.f.slope, self.f.intercept
            if s == 0.0:
                return np.asarray(w, dtype=float) * c
            return (self.sign * np.exp(s * np.asarray(w, dtype=float)) - c) / s
        if self.sign > 0.0:
            return np.interp(w, self.ws, self.xs)
        return np.interp(w, self.ws[::-1], self.xs[::-1])

    def advance(self, x0: float, dt: float) -> LegResult:
        """Flow from x0 for duration dt inside this piece.

        A critical end is approached but never crossed ("asymptotic"); a
        plain end terminates the leg ("hit_window_boundary").
        """
        if dt < 0.0:
            raise DegenerateModelError("leg duration must be nonnegative")
        x0 = self.clamp(x0)
        w0 = float(self.W(x0))
        if self.sign > 0.0:
            w_exit, x_exit, exit_critical = float(self.W(self.b_eff)), self.b_eff, self.b_critical
        else:
            w_exit, x_exit, exit_critical = float(self.W(self.a_eff)), self.a_eff, self.a_critical
        t_exit = w_exit - w0
        if dt >= t_exit:
            if exit_critical:
                x1, used, status = x_exit, dt, "asymptotic"
            else:
                x1, used, status = x_exit, max(t_exit, 0.0), "hit_window_boundary"
        else:
            x1 = float(self.invert_W(w0 + dt))
            x1 = min(max(x1, self.a_eff), self.b_eff)
            used, status = dt, "completed"
        lo, hi = (x0, x1) if x1 >= x0 else (x1, x0)
        return LegResult(x1, used, lo, hi, status)

    def time_between(self, x0: float, x1: float) -> float:
        """Travel time from x0 to x1 along the motion (positive if ahead)."""
        return float(self.W(self.clamp(x1))) - float(self.W(self.clamp(x0)))


class TravelMap:
    """Per-state piecewise travel maps over a window."""

    def __init__(self, system: SwitchingSystem, window: tuple[float, float], *,
                 min_offset_rel: float = 1e-9, n_cells: int = 2048):
        self.system = system
        self.window = (float(window[0]), float(window[1]))
        lo, hi = self.window
        width = hi - lo
        self.pieces: list[list[PieceMap]] = []
        self.criticals: list[list[float]] = []
        for i in range(system.n):
            pts, _ = system.critical_points(i, self.window)
            self.criticals.append(pts)
            bounds = [lo] + pts + [hi]
            state_pieces = []
            for k, (a, b) in enumerate(zip(bounds, bounds[1:])):
                if b - a <= 2e-9 * width:
                    continue
                state_pieces.append(PieceMap(
                    system.fields[i], a, b,
                    a_critical=(a in pts),
                    b_critical=(b in pts),
                    min_offset=min_offset_rel * width,
                    n_cells=n_cells,
                ))
            self.pieces.append(state_pieces)

    def piece_for(self, i: int, x: float) -> PieceMap:
        pieces = self.pieces[i]
        for p in pieces:
            if p.contains(x):
                return p
        raise DegenerateModelError(f"position {x} outside window for state {i}")

    def advance(self, i: int, x0: float, dt: float) -> LegResult:
        return self.piece_for(i, x0).advance(x0, dt)

    def travel_time(self, i: int, x0: float, x1: float) -> float:
        p = self.piece_for(i, x0)
        if not p.contains(x1):
            raise DegenerateModelError("travel endpoints lie in different pieces")
        return p.time_between(x0, x1)

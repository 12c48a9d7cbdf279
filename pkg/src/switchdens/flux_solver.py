"""Stationary densities on an invariant interval: the flux ODE route.

The stationary flux vector phi (phi_i = rho_i u_i) satisfies
phi' = Lambda U(x) phi away from critical points and approaches each critical
point along local regular-singular branches.  The solver splits the working
range at its critical points, represents the solution near each one by the
truncated series branch (or an inward log-coordinate propagator when a field
is not analytic), propagates fundamental matrices across the regular zones,
and closes the system with flux continuity across critical points, branch
membership at critical endpoints, and vanishing flux at truncated window
edges.  The smallest singular vector of the assembled homogeneous system is
the stationary profile; unit total mass fixes the scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    ConfigError,
    DegenerateModelError,
    DiagnosticError,
    NumericalError,
    UnsupportedCaseError,
)
from .fields import critical_points, field_scale
from .frobenius import FrobeniusExpansion, _critical_index, frobenius_expansion
from .structure import MinimalInvariantSet
from .system import SwitchingSystem

__all__ = ["DensityGrid", "GridSpec", "solve_flux_ode"]

ENDPOINT_TOL = 1e-9

# minimum decay factor toward a truncated edge for a flux mode to stay free
EDGE_DECAY_MIN = 10.0


@dataclass(frozen=True)
class GridSpec:
    """Mesh and tolerance knobs for the flux ODE solve."""

    min_offset_rel: float = 1e-8   # first node offset from a critical point
    ratio: float = 1.05            # geometric grading toward critical points
    max_regular_cells: int = 64
    series_order: int = 8
    rtol: float = 1e-12
    atol: float = 1e-14
    quad_points: int = 16
    edge_density_rel: float = 1e-6  # acceptable relative density at a truncated edge
    max_extensions: int = 4         # automatic widenings toward an infinite endpoint
    method: str = "DOP853"

    def __post_init__(self):
        if self.ratio <= 1.0:
            raise ConfigError("grading ratio must exceed 1")
        if not 0.0 < self.min_offset_rel < 1e-2:
            raise ConfigError("min_offset_rel out of range")
        if self.max_regular_cells < 4 or self.quad_points < 2 or self.series_order < 1:
            raise ConfigError("mesh parameters out of range")


@dataclass(eq=False)
class DensityGrid:
    """Solved invariant density on one interval.

    Node positions never coincide with a critical point (minimum offset is
    min_offset_rel times the range length); the one-sided limits there are a
    question for the asymptotics layer.  rho and flux are (n_states, n_nodes);
    after the solve the total mass is 1 and masses holds the per-state split.
    flux_at/rho_at evaluate the underlying representation between nodes.
    """

    nodes: np.ndarray
    rho: np.ndarray
    flux: np.ndarray
    normalization: float
    interval: tuple[float, float]
    masses: np.ndarray
    special_points: tuple[float, ...] = ()
    diagnostics: dict = field(default_factory=dict)
    flux_eval: Callable | None = field(default=None, repr=False)
    rho_eval: Callable | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    def flux_at(self, x):
        if self.flux_eval is None:
            raise ConfigError("grid carries no flux evaluator")
        return self.flux_eval(x)

    def rho_at(self, i: int, x):
        if self.rho_eval is None:
            raise ConfigError("grid carries no density evaluator")
        return self.rho_eval(i, x)


@dataclass(eq=False)
class _Branch:
    """Local solution family on one side of one critical point."""

    xi: float
    side: int                 # +1: covers (xi, xi+eps]; -1: [xi-eps, xi)
    eps: float
    jc: int
    a: float
    mu: float
    repelling: bool
    exp: FrobeniusExpansion | None = None
    free_idx: tuple[int, ...] = ()
    basis: np.ndarray | None = None      # phi(matching point) = basis @ params
    prop_sol: object | None = None       # log-coordinate propagator (nonanalytic)
    prop_in: np.ndarray | None = None    # propagator value at the innermost offset
    eta_in: float | None = None

    @property
    def matching_x(self) -> float:
        return self.xi + self.side * self.eps


def _endpoint_critical(system: SwitchingSystem, x: float, probe: tuple[float, float]) -> bool:
    return any(abs(f(x)) <= ENDPOINT_TOL * field_scale(f, probe) for f in system.fields)


def _resolve_interval(system, interval, window):
    """Working range plus endpoint kinds and per-side extension permissions."""
    if isinstance(interval, MinimalInvariantSet):
        if interval.kind == "singleton":
            raise UnsupportedCaseError(
                "a singleton invariant set carries a point mass, not a density")
        lo, hi = interval.left, interval.right
        ext_lo, ext_hi = not math.isfinite(lo), not math.isfinite(hi)
        if (ext_lo or ext_hi) and window is None:
            raise ConfigError("interval reaches infinity: pass a finite window")
        if window is not None:
            lo, hi = interval.solve_range(window)
        if hi <= lo:
            raise ConfigError("window does not overlap the interval")
        lo_crit = interval.left_is_critical and lo == interval.left
        hi_crit = interval.right_is_critical and hi == interval.right
        return float(lo), float(hi), lo_crit, hi_crit, ext_lo, ext_hi
    lo, hi = float(interval[0]), float(interval[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError("pass a finite working range or a MinimalInvariantSet plus window")
    if hi <= lo:
        raise ConfigError(f"empty working range [{lo}, {hi}]")
    return (lo, hi, _endpoint_critical(system, lo, (lo, hi)),
            _endpoint_critical(system, hi, (lo, hi)), False, False)


def _interior_criticals(system, lo, hi, margin):
    pts = []
    for f in system.fields:
        zeros, _ = critical_points(f, (lo, hi))
        pts.extend(z for z in zeros if lo + margin < z < hi - margin)
    pts.sort()
    merged = []
    for p in pts:
        if not merged or p - merged[-1] > ENDPOINT_TOL * (hi - lo):
            merged.append(p)
    return merged


def _graded_offsets(d0, ratio, limit, h_max):
    out = []
    d = d0
    while d < limit:
        out.append(d)
        if d * (ratio - 1.0) >= h_max:
            break
        d *= ratio
    return out


def _segment_nodes(lo, hi, lo_graded, hi_graded, d0, spec):
    seg = hi - lo
    h_max = seg / spec.max_regular_cells
    if lo_graded:
        offs = _graded_offsets(d0, spec.ratio, 0.5 * seg, h_max)
        if not offs:
            raise NumericalError(f"segment [{lo}, {hi}] is too short for the mesh floor")
        left = [lo + d for d in offs]
    else:
        left = [lo]
    if hi_graded:
        offs = _graded_offsets(d0, spec.ratio, 0.5 * seg, h_max)
        if not offs:
            raise NumericalError(f"segment [{lo}, {hi}] is too short for the mesh floor")
        right = [hi - d for d in offs][::-1]
    else:
        right = [hi]
    a, b = left[-1], right[0]
    mid = []
    if b > a:
        cells = max(1, int(math.ceil((b - a) / h_max)))
        mid = list(np.linspace(a, b, cells + 1)[1:-1])
    return np.unique(np.concatenate([left, mid, right]))


def _log_rhs(system, xi, side):
    lam = system.rates.flux_matrix
    n = system.n

    def rhs(s, y):
        eta = math.exp(s)
        x = xi + side * eta
        diag = np.array([side * eta / system.u(i, x) for i in range(n)])
        return (lam @ (diag[:, None] * y.reshape(n, n))).ravel()

    return rhs


def _make_branch(system, xi, side, max_eps, d0, spec):
    """Local family facing into the interval; series when fields allow it."""
    if system.all_analytic:
        exp = frobenius_expansion(system, xi, order=spec.series_order, side=side)
        eps = min(0.5 * exp.radius, max_eps)
        if eps < 10.0 * d0:
            raise NumericalError(
                f"matching radius {eps:.3e} at {xi} collapses onto the mesh floor")
        if eps != exp.epsilon:
            exp = frobenius_expansion(system, xi, order=spec.series_order,
                                      side=side, epsilon=eps)
        jc = exp.eigen.crit_index
        mu = exp.eigen.eigenvalue
        repelling = exp.a < 0.0
        veps = exp.V(eps)
        free = tuple(i for i in range(system.n) if i != jc)
        cols = [veps[:, i] for i in free]
        if not repelling:
            cols.append(veps @ exp.eigen.lam_vec)
        return _Branch(xi, side, eps, jc, exp.a, mu, repelling, exp=exp,
                       free_idx=free, basis=np.column_stack(cols))

    jc = _critical_index(system, xi)
    a = -float(system.du(jc, xi))
    if a == 0.0:
        raise DegenerateModelError("degenerate tangency: u' vanishes at the critical point")
    eps = max_eps
    if eps < 10.0 * d0:
        raise NumericalError(f"matching radius {eps:.3e} at {xi} collapses onto the mesh floor")
    n = system.n
    sol = solve_ivp(_log_rhs(system, xi, side), (math.log(eps), math.log(d0)),
                    np.eye(n).ravel(), method="DOP853", rtol=1e-11, atol=1e-13,
                    dense_output=True)
    if sol.status != 0:
        raise NumericalError(f"inward propagation failed at {xi}: {sol.message}")
    mu = float(system.rates.holding[jc]) / a
    return _Branch(xi, side, eps, jc, a, mu, a < 0.0, prop_sol=sol.sol,
                   prop_in=sol.y[:, -1].reshape(n, n), eta_in=d0,
                   basis=np.eye(n))


def _propagate(system, x0, x1, spec):
    lam = system.rates.flux_matrix
    n = system.n

    def rhs(x, y):
        inv_u = np.array([1.0 / system.u(i, x) for i in range(n)])
        return (lam @ (inv_u[:, None] * y.reshape(n, n))).ravel()

    last = None
    for meth, rt in ((spec.method, spec.rtol), ("Radau", max(spec.rtol, 1e-10))):
        sol = solve_ivp(rhs, (x0, x1), np.eye(n).ravel(), method=meth,
                        rtol=rt, atol=spec.atol, dense_output=True)
        if sol.status == 0:
            return sol
        last = sol
    raise NumericalError(f"flux propagation failed on [{x0}, {x1}]: {last.message}")


def _propagate_chain(system, x0, x1, spec, cap=100.0):
    """Multiple-shooting subdivision of one regular zone.

    A single fundamental matrix across a long zone mixes growing and decaying
    modes, and after row normalization a huge matrix makes its continuity
    condition nearly free to violate.  Splitting until each factor stays small
    keeps every condition honestly weighted.
    """
    chain = []

    def rec(a, b, depth):
        sol = _propagate(system, a, b, spec)
        if np.abs(sol.y[:, -1]).max() > cap and depth < 14:
            mid = 0.5 * (a + b)
            rec(a, mid, depth + 1)
            rec(mid, b, depth + 1)
        else:
            chain.append((a, b, sol))

    rec(x0, x1, 0)
    return chain


def _series_flux(branch, y_full, nu, etas):
    """phi at offsets etas in [0, eps] for a series branch."""
    exp = branch.exp
    lam = exp.eigen.lam_vec
    n = lam.shape[0]
    log_dir = np.zeros(n)
    if exp.resonant and not branch.repelling and exp.resonant_order:
        log_dir = exp.epsilon ** exp.resonant_order * (exp.Y @ y_full)
    power_active = nu != 0.0 or log_dir.any()
    out = np.empty((n, etas.shape[0]))
    for k, e in enumerate(etas):
        vec = y_full
        if e > 0.0 and power_active:
            ratio = e / branch.eps
            vec = y_full + ratio ** branch.mu * (nu * lam + math.log(ratio) * log_dir)
        out[:, k] = exp.V(e) @ vec
    return out


def _prop_flux(branch, v, etas):
    """phi at offsets for a propagator branch; frozen below its inner cutoff."""
    n = v.shape[0]
    s = np.log(np.clip(etas, branch.eta_in, branch.eps))
    mats = branch.prop_sol(s).reshape(n, n, -1)
    return np.einsum("ijk,j->ik", mats, v)


class _Solve:
    """One assembly of the homogeneous system on a fixed working range."""

    def __init__(self, system, lo, hi, lo_crit, hi_crit, spec):
        self.system = system
        self.spec = spec
        self.lo, self.hi = lo, hi
        self.n = system.n
        self.L = hi - lo
        self.d0 = spec.min_offset_rel * self.L
        interior = _interior_criticals(system, lo, hi, 2.0 * self.d0)
        self.specials = [lo] + interior + [hi]
        self.crit_flags = [lo_crit] + [True] * len(interior) + [hi_crit]
        if not any(self.crit_flags):
            raise DiagnosticError(
                "no critical point inside the working range; the window alone "
                "does not determine a stationary profile")
        gaps = np.diff(self.specials)
        if np.any(gaps < 20.0 * self.d0):
            raise NumericalError("critical points closer than the mesh can resolve")
        self._build_blocks()
        self._assemble()
        self._solve_params()
        self._build_pieces()
        self._finalize()

    # -- structure ---------------------------------------------------------

    def _build_blocks(self):
        n = self.n
        self.blocks = []
        offset = 0
        for k, (x, crit) in enumerate(zip(self.specials, self.crit_flags)):
            first, last = k == 0, k == len(self.specials) - 1
            blk = {"x": x, "crit": crit, "endpoint": first or last,
                   "rows": [], "branchL": None, "branchR": None}
            if crit:
                if not first:
                    blk["branchL"] = _make_branch(
                        self.system, x, -1, 0.4 * (x - self.specials[k - 1]),
                        self.d0, self.spec)
                if not last:
                    blk["branchR"] = _make_branch(
                        self.system, x, 1, 0.4 * (self.specials[k + 1] - x),
                        self.d0, self.spec)
                br = blk["branchL"] or blk["branchR"]
                if (first or last) and br.repelling:
                    raise UnsupportedCaseError(
                        f"repelling critical endpoint at {x}: the interval side "
                        "facing it cannot carry an invariant density")
                self._fill_critical_block(blk, first, last)
            else:
                # truncated window edge: carries only the flux modes that
                # decay toward the edge; the basis is cut down in
                # _restrict_edges once the adjacent zone has been propagated
                blk["size"] = n
                blk["exprL" if last else "exprR"] = np.eye(n)
            self.blocks.append(blk)

    def _fill_critical_block(self, blk, first, last):
        n = self.n
        bl, br = blk["branchL"], blk["branchR"]
        some = bl or br
        if some.exp is None:
            # nonanalytic: independent flux vectors at the matching points,
            # tied by continuity of the noncritical components at the cutoff
            size = n * ((bl is not None) + (br is not None))
            blk["size"] = size
            jc = some.jc
            if bl is not None:
                blk["exprL"] = np.hstack([np.eye(n)] + ([np.zeros((n, n))] if br else []))
            if br is not None:
                blk["exprR"] = np.hstack(([np.zeros((n, n))] if bl else []) + [np.eye(n)])
            if bl is not None and br is not None:
                rows = []
                for i in range(n):
                    if i == jc:
                        continue
                    rows.append(np.concatenate([bl.prop_in[i], -br.prop_in[i]]))
                if some.repelling:
                    # only a repelling point leaves a growing local mode whose
                    # amplitude the inner offset can see; at an attracting one
                    # the critical flux vanishes there for every admissible
                    # vector and the row would pin the feed instead
                    rows.append(np.concatenate([bl.prop_in[jc], np.zeros(n)]))
                    rows.append(np.concatenate([np.zeros(n), br.prop_in[jc]]))
                blk["rows"].append(np.vstack(rows))
            else:
                alive = bl if bl is not None else br
                blk["rows"].append(alive.prop_in)
            return
        if first or last:
            # endpoint: the noncritical limit vanishes, only the power branch
            branch = br if first else bl
            blk["size"] = 1
            col = branch.basis[:, -1]
            blk["exprR" if first else "exprL"] = col.reshape(n, 1)
            return
        # interior: shared noncritical limit, one power coefficient per side
        free = some.free_idx
        n_free = len(free)
        nus = (not bl.repelling) + (not br.repelling)
        blk["size"] = n_free + nus
        col_l = 0
        exprs = {}
        for name, branch in (("exprL", bl), ("exprR", br)):
            mat = np.zeros((n, blk["size"]))
            mat[:, :n_free] = branch.basis[:, :n_free]
            exprs[name] = mat
        if not bl.repelling:
            exprs["exprL"][:, n_free] = bl.basis[:, -1]
            col_l = 1
        if not br.repelling:
            exprs["exprR"][:, n_free + col_l] = br.basis[:, -1]
        blk.update(exprs)

    # -- linear system -----------------------------------------------------

    def _lift(self, mat, off, size):
        out = np.zeros((mat.shape[0], self.n_params))
        out[:, off:off + size] = mat
        return out

    def _restrict_edges(self):
        # A truncated edge may only carry flux modes that decay toward it.
        # The admissible subspace comes from the singular split of the map
        # across the adjacent zone; restricting the edge vector to it removes
        # the outward-growing mode from the solution space entirely, instead
        # of fighting the real (small but nonzero) truncation tail with a
        # zero condition that the true solution cannot meet.
        for at_end in (False, True):
            blk = self.blocks[-1 if at_end else 0]
            if blk["crit"]:
                continue
            chain = self.seg_chains[-1 if at_end else 0]
            cum = np.eye(self.n)
            for _, _, sol in chain:
                cum = sol.y[:, -1].reshape(self.n, self.n) @ cum
            u, sv, vt = np.linalg.svd(cum)
            if at_end:
                # cum maps the last matched value outward to the edge
                basis = u[:, sv < 1.0 / EDGE_DECAY_MIN]
            else:
                # cum maps the edge vector inward; the floor guards against
                # spurious survivors when cum is numerically rank deficient
                basis = vt[sv > max(EDGE_DECAY_MIN, sv[0] * 1e-12)].T
            blk["size"] = basis.shape[1]
            blk["exprL" if at_end else "exprR"] = basis

    def _assemble(self):
        self.seg_chains = []
        for k in range(len(self.specials) - 1):
            left, right = self.blocks[k], self.blocks[k + 1]
            x0 = left["branchR"].matching_x if left["crit"] else left["x"]
            x1 = right["branchL"].matching_x if right["crit"] else right["x"]
            self.seg_chains.append(_propagate_chain(self.system, x0, x1, self.spec))
        self._restrict_edges()
        offset = 0
        for blk in self.blocks:
            blk["off"] = offset
            offset += blk["size"]
        self.n_params = offset
        # intermediate shooting vectors become extra unknowns
        self.cut_offsets = []
        for chain in self.seg_chains:
            cuts = []
            for _ in range(len(chain) - 1):
                cuts.append(self.n_params)
                self.n_params += self.n
            self.cut_offsets.append(cuts)
        rows = []
        eye = np.eye(self.n)
        for k, chain in enumerate(self.seg_chains):
            left, right = self.blocks[k], self.blocks[k + 1]
            cuts = self.cut_offsets[k]
            for j, (_, _, sol) in enumerate(chain):
                m_end = sol.y[:, -1].reshape(self.n, self.n)
                if j == 0:
                    src = self._lift(m_end @ left["exprR"], left["off"], left["size"])
                else:
                    src = self._lift(m_end, cuts[j - 1], self.n)
                if j == len(chain) - 1:
                    dst = self._lift(right["exprL"], right["off"], right["size"])
                else:
                    dst = self._lift(eye, cuts[j], self.n)
                rows.append(src - dst)
        for blk in self.blocks:
            for extra in blk["rows"]:
                rows.append(self._lift(extra, blk["off"], blk["size"]))
        # no explicit flux-sum row: the columns of the rate matrix sum to zero,
        # so sum(phi) is carried as a constant by the propagation rows and the
        # endpoint conditions pin its value
        a = np.vstack(rows)
        norms = np.max(np.abs(a), axis=1)
        a = a / np.where(norms > 0.0, norms, 1.0)[:, None]
        self.matrix = a

    def _solve_params(self):
        a = self.matrix
        if a.shape[0] < a.shape[1]:
            raise DiagnosticError("underdetermined flux system; range lacks structure")
        _, s, vh = np.linalg.svd(a)
        if s.size >= 2 and s[-2] < 1e-10 * s[0]:
            raise DiagnosticError(
                "stationary solution subspace is degenerate (rate matrix may be "
                "reducible on this interval)")
        self.params = vh[-1]
        self.svd_residual = float(s[-1] / s[0]) if s[0] > 0 else 0.0

    # -- evaluation --------------------------------------------------------

    def _block_piece(self, blk, side_name):
        """(branch, y_full, nu) or (branch, v) realization for one side."""
        p = self.params[blk["off"]:blk["off"] + blk["size"]]
        br = blk[side_name]
        if br.exp is None:
            v = p[:self.n] if side_name == "branchL" or blk["size"] == self.n else p[self.n:]
            return ("prop", br, v)
        n_free = len(br.free_idx)
        y = np.zeros(self.n)
        if blk["endpoint"]:
            nu = p[0]
        else:
            y[list(br.free_idx)] = p[:n_free]
            bl = blk["branchL"]
            if br.repelling:
                nu = 0.0
            elif side_name == "branchL":
                nu = p[n_free]
            else:
                nu = p[n_free + (1 if (bl is not None and not bl.repelling) else 0)]
        return ("series", br, y, nu)

    def _build_pieces(self):
        self.pieces = []
        for k, blk in enumerate(self.blocks):
            if not blk["crit"]:
                continue
            x = blk["x"]
            if blk["branchL"] is not None:
                piece = self._block_piece(blk, "branchL")
                self.pieces.append((x - blk["branchL"].eps, x, piece))
            if blk["branchR"] is not None:
                piece = self._block_piece(blk, "branchR")
                self.pieces.append((x, x + blk["branchR"].eps, piece))
        for k, chain in enumerate(self.seg_chains):
            left = self.blocks[k]
            cuts = self.cut_offsets[k]
            for j, (xa, xb, sol) in enumerate(chain):
                if j == 0:
                    phi0 = left["exprR"] @ self.params[left["off"]:left["off"] + left["size"]]
                else:
                    c = cuts[j - 1]
                    phi0 = self.params[c:c + self.n]
                self.pieces.append((xa, xb, ("dense", sol.sol, phi0)))

    def _eval_flux(self, xs):
        xs = np.asarray(xs, dtype=float)
        out = np.full((self.n, xs.shape[0]), np.nan)
        done = np.zeros(xs.shape[0], dtype=bool)
        for plo, phi_x, piece in self.pieces:
            mask = ~done & (xs >= plo - 1e-300) & (xs <= phi_x + 1e-300)
            if not mask.any():
                continue
            sel = xs[mask]
            if piece[0] == "series":
                _, br, y, nu = piece
                vals = _series_flux(br, y, nu, np.abs(sel - br.xi))
            elif piece[0] == "prop":
                _, br, v = piece
                vals = _prop_flux(br, v, np.abs(sel - br.xi))
            else:
                _, dense, phi0 = piece
                mats = dense(sel).reshape(self.n, self.n, -1)
                vals = np.einsum("ijk,j->ik", mats, phi0)
            out[:, mask] = vals
            done |= mask
        if not done.all():
            raise NumericalError("evaluation point outside the working range")
        return out

    def _u_values(self, xs):
        return np.vstack([np.asarray(self.system.u(i, xs), dtype=float)
                          for i in range(self.n)])

    # -- mass and packaging ------------------------------------------------

    def _finalize(self):
        spec = self.spec
        node_parts = []
        for k in range(len(self.specials) - 1):
            seg = _segment_nodes(self.specials[k], self.specials[k + 1],
                                 self.crit_flags[k], self.crit_flags[k + 1],
                                 self.d0, spec)
            node_parts.append(seg)
        nodes = np.unique(np.concatenate(node_parts))
        gl_x, gl_w = np.polynomial.legendre.leggauss(spec.quad_points)
        # cells straddling an interior critical point hold a singular integrand;
        # the analytic sub-offset remainder below covers them instead
        keep = np.ones(nodes.size - 1, dtype=bool)
        for x_c, crit in zip(self.specials, self.crit_flags):
            if crit and self.lo < x_c < self.hi:
                k = int(np.searchsorted(nodes, x_c)) - 1
                if 0 <= k < keep.size:
                    keep[k] = False
        mids = 0.5 * (nodes[:-1] + nodes[1:])[keep]
        half = 0.5 * np.diff(nodes)[keep]
        qx = (mids[:, None] + half[:, None] * gl_x[None, :]).ravel()
        qw = (half[:, None] * gl_w[None, :]).ravel()
        phi_q = self._eval_flux(qx)
        rho_q = phi_q / self._u_values(qx)
        masses = rho_q @ qw
        phi_nodes = self._eval_flux(nodes)
        u_nodes = self._u_values(nodes)
        rho_nodes = phi_nodes / u_nodes

        # mass hiding below the first node next to each critical point
        for blk in self.blocks:
            if not blk["crit"]:
                continue
            for name in ("branchL", "branchR"):
                br = blk[name]
                if br is None:
                    continue
                edge_x = blk["x"] + br.side * self.d0
                idx = int(np.argmin(np.abs(nodes - edge_x)))
                f = np.ones(self.n)
                if not br.repelling and br.mu < 1.0:
                    f[br.jc] = 1.0 / br.mu
                masses = masses + rho_nodes[:, idx] * self.d0 * f

        total = float(masses.sum())
        if not math.isfinite(total) or abs(total) < 1e-300:
            raise NumericalError("stationary profile has no integrable mass")
        sign = 1.0 if total > 0 else -1.0
        scale = sign / abs(total)
        rho_nodes *= scale
        phi_nodes *= scale
        masses = masses * scale

        rho_tot = rho_nodes.sum(axis=0)
        peak_tot = np.abs(rho_tot).max()
        edge_rel = [0.0, 0.0]
        if not self.crit_flags[0]:
            edge_rel[0] = float(abs(rho_tot[0]) / peak_tot)
        if not self.crit_flags[-1]:
            edge_rel[1] = float(abs(rho_tot[-1]) / peak_tot)

        # truncated edges carry artifacts of the order of the cut-off density,
        # so the negativity allowance scales with the truncation level
        neg = rho_nodes.min()
        peak = rho_nodes.max()
        allowance = max(1e-6, 10.0 * max(edge_rel))
        clipped = 0
        if neg < -allowance * peak:
            raise NumericalError(
                f"solved density dips negative ({neg:.3e} against peak {peak:.3e})")
        if neg < 0.0:
            clipped = int((rho_nodes < 0.0).sum())
            rho_nodes[rho_nodes < 0.0] = 0.0

        total_flux = phi_nodes.sum(axis=0)
        flux_scale = np.abs(phi_nodes).max()
        flux_dev = float(np.abs(total_flux).max() / flux_scale) if flux_scale > 0 else 0.0

        info = []
        for blk in self.blocks:
            if not blk["crit"]:
                continue
            br = blk["branchL"] or blk["branchR"]
            info.append({
                "x": blk["x"], "field": br.jc, "a": br.a, "mu": br.mu,
                "repelling": br.repelling,
                "resonant": bool(br.exp is not None and br.exp.resonant),
                "series": br.exp is not None,
            })

        eval_scale = scale

        def flux_eval(x):
            arr = np.atleast_1d(np.asarray(x, dtype=float))
            vals = self._eval_flux(arr) * eval_scale
            return vals[:, 0] if np.ndim(x) == 0 else vals

        def rho_eval(i, x):
            arr = np.atleast_1d(np.asarray(x, dtype=float))
            u = np.asarray(self.system.u(i, arr), dtype=float)
            if np.any(np.abs(u) < 1e-300):
                raise NumericalError(
                    "density evaluation at a critical point; take the one-sided "
                    "limit through the asymptotics layer instead")
            vals = self._eval_flux(arr)[i] * eval_scale / u
            return float(vals[0]) if np.ndim(x) == 0 else vals

        self.grid = DensityGrid(
            nodes=nodes, rho=rho_nodes, flux=phi_nodes, normalization=1.0,
            interval=(self.lo, self.hi), masses=masses,
            special_points=tuple(self.specials[k] for k in range(len(self.specials))
                                 if self.crit_flags[k]),
            diagnostics={
                "svd_residual": self.svd_residual,
                "flux_sum_dev": flux_dev,
                "raw_mass": abs(total),
                "negatives_clipped": clipped,
                "edge_density_rel": tuple(edge_rel),
                "critical_points": info,
                "notes": (),
            },
            flux_eval=flux_eval, rho_eval=rho_eval,
        )


def solve_flux_ode(system: SwitchingSystem, interval, grid_spec: GridSpec | None = None,
                   *, window: tuple[float, float] | None = None) -> DensityGrid:
    """Stationary density on one minimal invariant interval.

    interval is either a MinimalInvariantSet from the labeling step or a plain
    (lo, hi) tuple; with an infinite endpoint a finite window is required and
    the range grows automatically until the density at the cut is negligible.
    """
    spec = grid_spec or GridSpec()
    lo, hi, lo_crit, hi_crit, ext_lo, ext_hi = _resolve_interval(system, interval, window)
    notes = []
    for round_ in range(spec.max_extensions + 1):
        grid = _Solve(system, lo, hi, lo_crit, hi_crit, spec).grid
        edge = grid.diagnostics["edge_density_rel"]
        grow_lo = ext_lo and edge[0] > spec.edge_density_rel
        grow_hi = ext_hi and edge[1] > spec.edge_density_rel
        if not (grow_lo or grow_hi) or round_ == spec.max_extensions:
            if max(edge) > spec.edge_density_rel:
                notes.append(
                    f"truncated-edge density {max(edge):.2e} of peak; the window "
                    "may cut off real mass")
            break
        width = hi - lo
        if grow_lo:
            lo -= 0.6 * width
        if grow_hi:
            hi += 0.6 * width
    grid.diagnostics["notes"] = tuple(notes)
    return grid

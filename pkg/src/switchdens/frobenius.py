"""Series solution of the flux system at a regular singular point.

Multiplying the flux ODE by the local coordinate eta gives eta*phi' = B(eta)*phi
with B analytic, B(eta) = sum eta^k B_k.  B_0 has rank one: its only nonzero
column sits at the critical state, its eigenvalues are mu = lam_c/a and 0, and
a gauge transform V(eta) = 1 + sum eta^k V_k reduces the system to the constant
part B_0.  The V_k solve order-by-order Sylvester relations; when mu is a
positive integer the order-mu relation is obstructed and the obstruction is
absorbed into a nilpotent Y, which adds a log term to the reconstruction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateModelError,
    DiagnosticError,
    ExtrapolationWarning,
    UnsupportedCaseError,
)
from .fields import TabulatedField, field_scale, taylor_coeffs
from .system import SwitchingSystem

__all__ = [
    "B0Eigen",
    "FrobeniusExpansion",
    "NormalEquationResult",
    "b0_eigensystem",
    "frobenius_expansion",
    "reconstruct_flux",
    "solve_normal_equation",
    "taylor_B",
]

RESONANCE_TOL = 1e-9
EIGEN_TOL = 1e-12
DEFAULT_ORDER = 8
# truncation tail threshold defining the empirical validity radius
RADIUS_TOL = 1e-10


def _series_reciprocal(c: np.ndarray, order: int) -> np.ndarray:
    """Coefficients of 1/sum(c_k h^k) up to h**order; requires c_0 != 0."""
    if c[0] == 0.0:
        raise DegenerateModelError("series reciprocal needs a nonzero constant term")
    r = np.zeros(order + 1)
    r[0] = 1.0 / c[0]
    for k in range(1, order + 1):
        acc = 0.0
        for j in range(1, min(k, len(c) - 1) + 1):
            acc += c[j] * r[k - j]
        r[k] = -acc / c[0]
    return r


def _critical_index(system: SwitchingSystem, xi: float) -> int:
    probe = (xi - 1.0, xi + 1.0)
    hits = [i for i, f in enumerate(system.fields)
            if abs(f(xi)) <= 1e-9 * field_scale(f, probe)]
    if not hits:
        raise DegenerateModelError(f"{xi} is not a critical point of any field")
    if len(hits) > 1:
        raise UnsupportedCaseError("point is critical for more than one field")
    return hits[0]


def taylor_B(system: SwitchingSystem, xi: float, order: int = DEFAULT_ORDER, *,
             side: int = 1) -> list[np.ndarray]:
    """Taylor coefficients B_0..B_order of B(eta) = Lambda*diag(eta/u_i(eta)).

    eta = side*(x - xi) is the local coordinate pointing into the interval
    under analysis; mirroring flips the sign of every odd u-derivative, which
    leaves the linearization coefficient a invariant.
    """
    if side not in (1, -1):
        raise DegenerateModelError("side must be +1 or -1")
    if any(isinstance(f, TabulatedField) for f in system.fields):
        raise UnsupportedCaseError("series analysis requires analytic fields")
    jc = _critical_index(system, xi)
    lam_mat = system.rates.flux_matrix
    cols = np.zeros((order + 1, system.n))
    for i, f in enumerate(system.fields):
        c = taylor_coeffs(f, xi, order + 1)
        c = c * np.array([float(side) ** (k + 1) for k in range(order + 2)])
        if i == jc:
            if abs(c[1]) <= 1e-12 * field_scale(f, (xi - 1.0, xi + 1.0)):
                raise DegenerateModelError("degenerate tangency: u' vanishes at the critical point")
            # u/eta has coefficients c_1, c_2, ...; eta/u is its reciprocal
            cols[:, i] = _series_reciprocal(c[1:], order)
        else:
            # eta * (1/u): reciprocal shifted up one degree
            r = _series_reciprocal(c, order)
            cols[1:, i] = r[:order]
    return [lam_mat @ np.diag(cols[k]) for k in range(order + 1)]


@dataclass(frozen=True)
class B0Eigen:
    """Explicit eigenstructure of the rank-one matrix B_0."""

    eigenvalue: float        # lam_c / a
    lam_vec: np.ndarray      # eigenvector (holding rate at jc, minus outgoing rates)
    zero_basis: np.ndarray   # (n, n-1) columns spanning the 0-eigenspace
    crit_index: int
    residual: float


def b0_eigensystem(b0: np.ndarray, lam_c: float, a: float) -> B0Eigen:
    """Read the eigendata off B_0's single nonzero column and verify it."""
    n = b0.shape[0]
    col_norms = np.abs(b0).sum(axis=0)
    jc = int(np.argmax(col_norms))
    off = col_norms.sum() - col_norms[jc]
    if off > 1e-10 * max(col_norms[jc], 1.0):
        raise DiagnosticError("B_0 is not supported on a single column")
    mu = lam_c / a
    lam_vec = a * b0[:, jc]
    zero_basis = np.eye(n)[:, [i for i in range(n) if i != jc]]
    res = max(
        float(np.linalg.norm(b0 @ lam_vec - mu * lam_vec)),
        float(np.linalg.norm(b0 @ zero_basis)),
    )
    scale = max(float(np.linalg.norm(b0)), 1.0) * max(float(np.linalg.norm(lam_vec)), 1.0)
    if res > EIGEN_TOL * scale:
        raise DiagnosticError(f"eigen-residual {res:.3e} exceeds tolerance")
    return B0Eigen(mu, lam_vec, zero_basis, jc, res)


def _sylvester_operator(b0: np.ndarray, k: float) -> np.ndarray:
    """Matrix of V -> B_0 V - V(B_0 + k*1) acting on column-stacked V."""
    n = b0.shape[0]
    eye = np.eye(n)
    return np.kron(eye, b0) - np.kron(b0.T + k * eye, eye)


@dataclass(frozen=True)
class NormalEquationResult:
    V_k: tuple[np.ndarray, ...]   # V_0 = identity first
    resonant: bool
    resonant_order: int | None
    Y: np.ndarray
    notes: tuple[str, ...]


def solve_normal_equation(B_k: list[np.ndarray], mu: float) -> NormalEquationResult:
    """Solve eta*V' = B(eta)V - V*B_0 (plus the eta^m Y term when resonant).

    Order k reduces to B_0 V_k - V_k(B_0 + k*1) = -sum_{j=1}^{k} B_j V_{k-j},
    a Sylvester system that is uniquely solvable unless k equals mu.  For
    positive integer mu = m the order-m right side is corrected by a Y with
    B_0 Y = Y(B_0 + m*1); Y is rank one, built in closed form from the
    obstructed rows, and the order-m system is then solved in least squares
    (its kernel is gauge freedom).
    """
    n = B_k[0].shape[0]
    order = len(B_k) - 1
    m_round = int(round(mu))
    resonant = m_round >= 1 and abs(mu - m_round) < RESONANCE_TOL
    m = m_round if resonant else None

    b0 = B_k[0]
    jc = int(np.argmax(np.abs(b0).sum(axis=0)))

    V = [np.eye(n)]
    Y = np.zeros((n, n))
    notes: list[str] = []
    for k in range(1, order + 1):
        rhs = np.zeros((n, n))
        for j in range(1, k + 1):
            rhs -= B_k[j] @ V[k - j]
        if resonant and k >= m:
            if k == m:
                Y = _resonant_correction(rhs, b0, jc, m)
            rhs = rhs + V[k - m] @ Y
        op = _sylvester_operator(b0, float(k))
        sing = np.linalg.svd(op, compute_uv=False)
        if sing[-1] < 1e-10 * sing[0]:
            sol, *_ = np.linalg.lstsq(op, rhs.flatten(order="F"), rcond=None)
            vk = sol.reshape((n, n), order="F")
            if not (resonant and k == m):
                notes.append(f"order {k} solved in least squares (near-resonant system)")
        else:
            vk = np.linalg.solve(op, rhs.flatten(order="F")).reshape((n, n), order="F")
        V.append(vk)
    if resonant and m > order:
        notes.append(f"resonant order {m} lies beyond truncation {order}; Y not computed")
    return NormalEquationResult(tuple(V), resonant, m, Y, tuple(notes))


def _resonant_correction(rhs: np.ndarray, b0: np.ndarray, jc: int, m: int) -> np.ndarray:
    """Rank-one Y making the order-m system solvable.

    Solvability requires row jc of (Y + rhs) to vanish off the jc entry; with
    Y = lam_vec w^T and lam_vec[jc] = lam_c this fixes w off jc, and
    w.lam_vec = 0 fixes the remaining entry.
    """
    n = b0.shape[0]
    lam_vec = b0[:, jc].copy()
    # any scaling works; normalize so the jc entry is 1 for conditioning
    if lam_vec[jc] == 0.0:
        raise DiagnosticError("resonant correction needs a nonzero critical column")
    lam_vec = lam_vec / lam_vec[jc]
    w = np.zeros(n)
    for j in range(n):
        if j != jc:
            # row jc of Y is lam_vec[jc]*w = w
            w[j] = -rhs[jc, j]
    w[jc] = -float(w @ lam_vec)
    y = np.outer(lam_vec, w)
    # invariants from the intertwining relation
    if np.linalg.norm(y @ y) > 1e-10 * max(1.0, np.linalg.norm(y)) ** 2:
        raise DiagnosticError("resonant correction is not nilpotent")
    res = b0 @ y - y @ (b0 + m * np.eye(n))
    if np.linalg.norm(res) > 1e-8 * max(1.0, np.linalg.norm(y)) * max(1.0, np.linalg.norm(b0)):
        raise DiagnosticError("resonant correction fails the intertwining relation")
    return y


@dataclass
class FrobeniusExpansion:
    """Truncated local solution data at one critical point."""

    B_k: tuple[np.ndarray, ...]
    eigen: B0Eigen
    V_k: tuple[np.ndarray, ...]
    resonant: bool
    resonant_order: int | None
    Y: np.ndarray
    epsilon: float
    radius: float
    side: int
    a: float
    notes: tuple[str, ...] = ()
    nu: float | None = None
    y_tilde: np.ndarray | None = None

    @property
    def order(self) -> int:
        return len(self.V_k) - 1

    def V(self, eta) -> np.ndarray:
        """Partial sum of the gauge transform at eta (scalar -> (n, n))."""
        out = np.zeros_like(self.V_k[0])
        for k in range(self.order, -1, -1):
            out = out * eta + self.V_k[k]
        return out

    def decompose(self, phi_at_eps: np.ndarray) -> tuple[float, np.ndarray]:
        """Split V(eps)^-1 phi(eps) = nu*lam_vec + y_tilde, y_tilde[jc] = 0."""
        c = np.linalg.solve(self.V(self.epsilon), np.asarray(phi_at_eps, dtype=float))
        jc = self.eigen.crit_index
        nu = float(c[jc] / self.eigen.lam_vec[jc])
        y_tilde = c - nu * self.eigen.lam_vec
        y_tilde[jc] = 0.0
        return nu, y_tilde


def frobenius_expansion(system: SwitchingSystem, xi: float, *, order: int = DEFAULT_ORDER,
                        side: int = 1, epsilon: float | None = None,
                        radius_cap: float | None = None) -> FrobeniusExpansion:
    """Build the full expansion at xi: B_k, eigendata, V_k, Y, and radius."""
    jc = _critical_index(system, xi)
    a = -float(system.du(jc, xi))
    if a == 0.0:
        raise DegenerateModelError("degenerate tangency: u' vanishes at the critical point")
    B = taylor_B(system, xi, order, side=side)
    lam_c = float(system.rates.holding[jc])
    eig = b0_eigensystem(B[0], lam_c, a)
    spec = solve_normal_equation(B, eig.eigenvalue)
    radius = _validity_radius(spec.V_k)
    if radius_cap is not None:
        radius = min(radius, radius_cap)
    eps = epsilon if epsilon is not None else 0.5 * radius
    return FrobeniusExpansion(tuple(B), eig, spec.V_k, spec.resonant, spec.resonant_order,
                              spec.Y, eps, radius, side, a, spec.notes)


def _validity_radius(V_k: tuple[np.ndarray, ...]) -> float:
    """Largest eta where the last partial-sum increments stay below tolerance."""
    best = math.inf
    for k in range(max(1, len(V_k) - 2), len(V_k)):
        nrm = float(np.linalg.norm(V_k[k]))
        if nrm > 0.0:
            best = min(best, (RADIUS_TOL / nrm) ** (1.0 / k))
    return best if math.isfinite(best) else 1.0


def reconstruct_flux(expansion: FrobeniusExpansion, phi_at_eps: np.ndarray, eta):
    """Evaluate phi(eta) from phi at the matching point eps.

    phi(eta) = V(eta)[y_tilde + (eta/eps)^mu (nu*lam_vec + ln(eta/eps) Y y_tilde)],
    the log term present only in the resonant case.  eta may be a scalar or an
    array in (0, eps]; values beyond the validated radius are extrapolations.
    """
    eta_arr = np.atleast_1d(np.asarray(eta, dtype=float))
    if np.any(eta_arr <= 0.0):
        raise DegenerateModelError("reconstruction requires eta > 0")
    if np.any(eta_arr > expansion.radius * (1.0 + 1e-12)):
        warnings.warn("eta beyond validated series radius; result extrapolated",
                      ExtrapolationWarning, stacklevel=2)
    nu, y_tilde = expansion.decompose(phi_at_eps)
    expansion.nu, expansion.y_tilde = nu, y_tilde
    mu = expansion.eigen.eigenvalue
    lam_vec = expansion.eigen.lam_vec
    if expansion.resonant and expansion.resonant_order is not None:
        # the normal-equation Y couples through eta^m, not (eta/eps)^m: the
        # propagator of eta*psi' = (B_0 + eta^m Y)psi carries eps^m * Y in its
        # log factor (check by differentiating with B_0 Y = Y(B_0 + m*1))
        log_dir = expansion.epsilon ** expansion.resonant_order * (expansion.Y @ y_tilde)
    else:
        log_dir = np.zeros_like(lam_vec)
    out = np.empty((eta_arr.shape[0], lam_vec.shape[0]))
    for idx, e in enumerate(eta_arr):
        ratio = e / expansion.epsilon
        vec = y_tilde + ratio ** mu * (nu * lam_vec + math.log(ratio) * log_dir)
        out[idx] = expansion.V(e) @ vec
    return out[0] if np.isscalar(eta) or np.asarray(eta).ndim == 0 else out

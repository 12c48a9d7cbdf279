"""Series machinery tests: B_k coefficients, eigendata, V_k, Y, reconstruction."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from switchdens.errors import (
    DegenerateModelError,
    ExtrapolationWarning,
    UnsupportedCaseError,
)
from switchdens.fields import AffineField, PolynomialField, TabulatedField
from switchdens.frobenius import (
    b0_eigensystem,
    frobenius_expansion,
    reconstruct_flux,
    solve_normal_equation,
    taylor_B,
)
from switchdens.system import SwitchingRates, SwitchingSystem

from oracles import TwoStateOracle, example_b_system, two_state_system


def flux_ode_matrix(system, eta):
    """Exact B(eta) = Lambda diag(eta/u_i) evaluated pointwise."""
    diag = np.array([eta / system.u(i, eta) for i in range(system.n)])
    return system.rates.flux_matrix @ np.diag(diag)


def test_taylor_b_two_state_frozen():
    sys2 = two_state_system(2.0, 3.0)
    B = taylor_B(sys2, 0.0, order=3)
    assert np.allclose(B[0], [[2.0, 0.0], [-2.0, 0.0]], atol=1e-14)
    # eta/(1 - eta) = eta + eta^2 + ...: every higher coefficient is the same
    for k in (1, 2, 3):
        assert np.allclose(B[k], [[0.0, 3.0], [0.0, -3.0]], atol=1e-13)


def test_taylor_b_matches_direct_product():
    sys2 = two_state_system(2.0, 3.0)
    B = taylor_B(sys2, 0.0, order=0)
    direct = sys2.rates.flux_matrix @ np.diag([-1.0, 0.0])
    assert np.array_equal(B[0], direct)


def test_taylor_b_refuses_tabulated():
    xs = np.linspace(-2.0, 2.0, 401)
    sysT = SwitchingSystem(
        fields=(TabulatedField(xs, -xs), AffineField(0.0, 1.0)),
        rates=SwitchingRates(np.array([[0.0, 1.0], [1.0, 0.0]])),
    )
    with pytest.raises(UnsupportedCaseError):
        taylor_B(sysT, 0.0, order=4)


def test_taylor_b_rejects_degenerate_tangency():
    sysC = SwitchingSystem(
        fields=(PolynomialField([0.0, 0.0, 0.0, -1.0]), AffineField(0.0, 1.0)),
        rates=SwitchingRates(np.array([[0.0, 1.0], [1.0, 0.0]])),
    )
    with pytest.raises(DegenerateModelError):
        taylor_B(sysC, 0.0, order=4)


def test_taylor_b_rejects_noncritical_and_shared():
    sys2 = two_state_system(2.0, 3.0)
    with pytest.raises(DegenerateModelError):
        taylor_B(sys2, 0.5, order=2)
    shared = SwitchingSystem(
        fields=(AffineField(-1.0, 0.0), AffineField(-2.0, 0.0)),
        rates=SwitchingRates(np.array([[0.0, 1.0], [1.0, 0.0]])),
    )
    with pytest.raises(UnsupportedCaseError):
        taylor_B(shared, 0.0, order=2)


def test_b0_eigensystem_three_state():
    # all rates 1: holding rate 2 at the critical state, eigenvector (2,-1,-1)
    sys3 = example_b_system(1.0, 1.0)
    B = taylor_B(sys3, 0.0, order=2)
    eig = b0_eigensystem(B[0], 2.0, 1.0)
    assert eig.eigenvalue == pytest.approx(2.0, abs=1e-14)
    assert eig.crit_index == 0
    assert np.allclose(eig.lam_vec, [2.0, -1.0, -1.0], atol=1e-13)
    assert np.allclose(B[0] @ np.array([0.0, 1.0, 0.0]), 0.0, atol=1e-15)
    assert eig.residual <= 1e-12


def test_b0_eigensystem_two_state():
    sys2 = two_state_system(3.0, 1.0)
    B = taylor_B(sys2, 0.0, order=1)
    eig = b0_eigensystem(B[0], 3.0, 1.0)
    assert eig.eigenvalue == pytest.approx(3.0)
    assert np.allclose(eig.lam_vec, [3.0, -3.0], atol=1e-13)
    assert np.allclose(eig.zero_basis[:, 0], [0.0, 1.0])


def test_normal_equation_constant_system():
    b0 = np.array([[2.0, 0.0], [-2.0, 0.0]])
    B = [b0, np.zeros((2, 2)), np.zeros((2, 2))]
    res = solve_normal_equation(B, 2.0)
    # resonance branch triggers (mu = 2) but with no forcing Y stays zero
    for vk in res.V_k[1:]:
        assert np.allclose(vk, 0.0, atol=1e-14)
    assert np.allclose(res.Y, 0.0, atol=1e-14)


def test_normal_equation_residual_order():
    # truncation at K leaves a residual of order eta^(K+1)
    sys2 = two_state_system(0.5, 1.5)
    K = 3
    B = taylor_B(sys2, 0.0, order=K)
    res = solve_normal_equation(B, 0.5)
    etas = np.geomspace(1e-2, 1e-1, 12)
    vals = []
    for eta in etas:
        V = sum(eta ** k * vk for k, vk in enumerate(res.V_k))
        dV = sum(k * eta ** (k - 1) * vk for k, vk in enumerate(res.V_k) if k >= 1)
        R = eta * dV - flux_ode_matrix(sys2, eta) @ V + V @ B[0]
        vals.append(np.linalg.norm(R))
    slope = np.polyfit(np.log(etas), np.log(vals), 1)[0]
    assert slope >= K + 0.5


def test_resonant_y_frozen_and_identities():
    # lam1 = a = 1 makes mu = 1; the order-1 obstruction fixes Y exactly
    sys2 = two_state_system(1.0, 3.0)
    exp = frobenius_expansion(sys2, 0.0, order=6)
    assert exp.resonant and exp.resonant_order == 1
    assert np.allclose(exp.Y, [[3.0, 3.0], [-3.0, -3.0]], atol=1e-12)
    assert np.allclose(exp.Y @ exp.Y, 0.0, atol=1e-12)
    assert np.allclose(exp.Y @ exp.eigen.lam_vec, 0.0, atol=1e-12)
    # Y maps anything into the mu-eigenspace of B_0
    img = exp.Y @ np.array([0.0, 1.0])
    assert np.allclose(exp.B_k[0] @ img, exp.eigen.eigenvalue * img, atol=1e-12)


def test_reconstruct_identity_at_eps():
    sys2 = two_state_system(0.5, 1.5)
    exp = frobenius_expansion(sys2, 0.0, order=8)
    phi_eps = np.array([-0.7, 0.7])
    out = reconstruct_flux(exp, phi_eps, exp.epsilon)
    assert np.allclose(out, phi_eps, rtol=1e-13)


def test_reconstruct_matches_closed_form():
    lam1, lam2 = 0.5, 1.5
    sys2 = two_state_system(lam1, lam2)
    oracle = TwoStateOracle(lam1, lam2)
    eps = 0.04
    exp = frobenius_expansion(sys2, 0.0, order=8, epsilon=eps)
    assert exp.radius > eps
    phi_eps = np.array([oracle.flux(0, eps), oracle.flux(1, eps)])
    etas = np.geomspace(1e-4, eps / 10.0, 9)
    out = reconstruct_flux(exp, phi_eps, etas)
    want = np.stack([oracle.flux(0, etas), oracle.flux(1, etas)], axis=1)
    assert np.allclose(out, want, rtol=1e-6)


def test_reconstruct_mirrored_side():
    # right endpoint of (0, 1): local coordinate 1 - x, critical field index 1
    lam1, lam2 = 2.0, 0.5
    sys2 = two_state_system(lam1, lam2)
    oracle = TwoStateOracle(lam1, lam2)
    eps = 0.04
    exp = frobenius_expansion(sys2, 1.0, order=8, side=-1, epsilon=eps)
    assert exp.eigen.crit_index == 1
    assert exp.eigen.eigenvalue == pytest.approx(lam2, rel=1e-12)
    phi_eps = -np.array([oracle.flux(0, 1.0 - eps), oracle.flux(1, 1.0 - eps)])
    etas = np.geomspace(2e-4, eps / 10.0, 7)
    out = reconstruct_flux(exp, phi_eps, etas)
    want = -np.stack([oracle.flux(0, 1.0 - etas), oracle.flux(1, 1.0 - etas)], axis=1)
    assert np.allclose(out, want, rtol=1e-6)


def test_reconstruct_resonant_log_term_vs_ode():
    # generic anchor excites the eta*ln(eta) branch; check against direct
    # integration of the flux system in log coordinates
    sys2 = two_state_system(1.0, 3.0)
    eps = 0.03
    exp = frobenius_expansion(sys2, 0.0, order=10, epsilon=eps)
    phi_eps = np.array([0.2, 1.0])   # not the invariant-density flux
    nu, y_tilde = exp.decompose(phi_eps)
    assert abs((exp.Y @ y_tilde)[0]) > 1e-12
    etas = np.geomspace(1e-3, eps / 3.0, 6)
    out = reconstruct_flux(exp, phi_eps, etas)

    def rhs(s, phi):
        return flux_ode_matrix(sys2, np.exp(s)) @ phi

    for eta, got in zip(etas, out):
        sol = solve_ivp(rhs, (np.log(eps), np.log(eta)), phi_eps,
                        method="DOP853", rtol=1e-12, atol=1e-14)
        assert np.allclose(got, sol.y[:, -1], rtol=2e-6, atol=1e-12)


def test_extrapolation_warning_beyond_radius():
    sys2 = two_state_system(0.5, 1.5)
    exp = frobenius_expansion(sys2, 0.0, order=4)
    phi_eps = np.array([-0.5, 0.5])
    with pytest.warns(ExtrapolationWarning):
        reconstruct_flux(exp, phi_eps, exp.radius * 1.5)


def test_expansion_defaults():
    sys2 = two_state_system(0.5, 1.5)
    exp = frobenius_expansion(sys2, 0.0)
    assert exp.order == 8
    assert 0.0 < exp.epsilon <= exp.radius
    assert not exp.resonant
    assert exp.a == pytest.approx(1.0)

"""Linearization data, the classification table, and the empirical fitters."""

import math

import numpy as np
import pytest

import switchdens.frobenius as frobenius
from switchdens.asymptotics import (
    classify_asymptotics,
    extrapolate_to_zero,
    fit_exponent,
    linearize_at_critical,
    reconstruct_flux,
    taylor_B,
)
from switchdens.errors import (
    ConfigError,
    DegenerateModelError,
    NumericalError,
    UnsupportedCaseError,
)
from switchdens.fields import AffineField, PolynomialField
from switchdens.system import SwitchingRates, SwitchingSystem

from oracles import TwoStateOracle, two_state_system


def test_reexports_series_machinery():
    assert taylor_B is frobenius.taylor_B
    assert reconstruct_flux is frobenius.reconstruct_flux


def test_linearize_affine_two_state():
    sys2 = two_state_system(2.0, 3.0)
    lin = linearize_at_critical(sys2, 0.0)
    assert lin.a == pytest.approx(1.0, rel=1e-14)
    assert lin.crit_index == 0
    assert math.isinf(lin.theta)
    assert lin.r_inf == 0.0
    # delta stops just short of the other field's zero at x = 1
    assert lin.delta == pytest.approx(1.0, rel=1e-8)


def test_linearize_left_side():
    sys2 = two_state_system(2.0, 3.0)
    lin = linearize_at_critical(sys2, 1.0, side=-1)
    assert lin.crit_index == 1
    assert lin.a == pytest.approx(1.0, rel=1e-14)
    # evaluating 1 - (1 - eta) near x = 1 leaves cancellation noise, no true r
    assert lin.r_inf == pytest.approx(0.0, abs=1e-7)
    assert lin.delta == pytest.approx(1.0, rel=1e-8)
    assert math.isinf(lin.theta)


def test_linearize_quadratic_field():
    sysq = SwitchingSystem(
        fields=(PolynomialField([0.0, -2.0, 3.0]), AffineField(0.0, 1.0)),
        rates=SwitchingRates(np.array([[0.0, 1.0], [1.0, 0.0]])),
    )
    lin = linearize_at_critical(sysq, 0.0)
    assert lin.a == pytest.approx(2.0, rel=1e-12)
    # backward flow climbs to the next zero of -2x + 3x^2
    assert lin.theta == pytest.approx(2.0 / 3.0, rel=1e-9)
    assert np.isfinite(lin.r_inf)
    # remainder near 0: r(eta) = 3/(2(2 - 3 eta)) -> 3/4
    eta = 1e-8
    r = -1.0 / sysq.u(0, eta) - 1.0 / (lin.a * eta)
    assert r == pytest.approx(0.75, abs=1e-6)


def test_linearize_repelling():
    sysr = SwitchingSystem(
        fields=(AffineField(1.0, 0.0), AffineField(0.0, -1.0)),
        rates=SwitchingRates(np.array([[0.0, 1.0], [1.0, 0.0]])),
    )
    lin = linearize_at_critical(sysr, 0.0)
    assert lin.a == pytest.approx(-1.0, rel=1e-14)
    assert lin.theta == 0.0


def test_linearize_window_caps_delta():
    sys2 = two_state_system(2.0, 3.0)
    lin = linearize_at_critical(sys2, 0.0, window=(-0.2, 0.4))
    assert lin.delta == pytest.approx(0.4, rel=1e-8)
    with pytest.raises(DegenerateModelError):
        linearize_at_critical(sys2, 0.0, side=-1, window=(0.0, 1.0))


def test_linearize_rejects_bad_input():
    sys2 = two_state_system(2.0, 3.0)
    with pytest.raises(DegenerateModelError):
        linearize_at_critical(sys2, 0.5)
    with pytest.raises(DegenerateModelError):
        linearize_at_critical(sys2, 0.0, side=0)
    cubic = SwitchingSystem(
        fields=(PolynomialField([0.0, 0.0, 0.0, -1.0]), AffineField(0.0, 1.0)),
        rates=SwitchingRates(np.array([[0.0, 1.0], [1.0, 0.0]])),
    )
    with pytest.raises(DegenerateModelError):
        linearize_at_critical(cubic, 0.0)


def test_classify_subcritical_power():
    form = classify_asymptotics(0.5, 1.0, "B", True)
    assert form.kind == "power"
    assert form.exponent == pytest.approx(-0.5)
    assert form.bounded is False
    assert not form.inconclusive
    # same cell in case C
    assert classify_asymptotics(0.5, 1.0, "C", False).kind == "power"


def test_classify_supercritical():
    form = classify_asymptotics(2.0, 1.0, "B", True, rho_bar0=1.5)
    assert form.kind == "constant"
    assert form.value == pytest.approx(1.5)
    assert form.bounded is True
    # case C splits on analyticity: positive-exponent power vs plain zero limit
    c_analytic = classify_asymptotics(2.0, 1.0, "C", True)
    assert c_analytic.kind == "power" and c_analytic.exponent == pytest.approx(1.0)
    assert c_analytic.bounded is True
    c_rough = classify_asymptotics(2.0, 1.0, "C", False)
    assert c_rough.kind == "zero" and c_rough.bounded is True


def test_classify_resonant_boundary():
    form = classify_asymptotics(1.0, 1.0, "B", True)
    assert form.kind == "log" and form.bounded is False
    assert form.resonant_critical
    band = classify_asymptotics(1.0, 1.0, "B", False)
    assert band.kind == "log_bounded_band" and band.bounded is False
    const = classify_asymptotics(1.0, 1.0, "C", True)
    assert const.kind == "constant" and const.bounded is True
    open_cell = classify_asymptotics(1.0, 1.0, "C", False)
    assert open_cell.inconclusive
    # tolerance edge
    assert classify_asymptotics(1.0 + 1e-12, 1.0, "B", True).resonant_critical
    assert not classify_asymptotics(1.1, 1.0, "B", True).resonant_critical


def test_classify_repelling():
    form = classify_asymptotics(0.5, -1.0, "B", True, rho_bar0=3.0)
    assert form.kind == "constant" and form.bounded is True
    assert form.value == pytest.approx(3.0 / 1.5)
    with pytest.raises(UnsupportedCaseError):
        classify_asymptotics(0.5, -1.0, "C", True)


def test_classify_rejects_bad_input():
    with pytest.raises(ConfigError):
        classify_asymptotics(1.0, 1.0, "A", True)
    with pytest.raises(ConfigError):
        classify_asymptotics(0.0, 1.0, "B", True)
    with pytest.raises(DegenerateModelError):
        classify_asymptotics(1.0, 0.0, "B", True)


def test_fit_exponent_exact_power():
    etas = np.geomspace(1e-4, 1e-1, 64)
    fit = fit_exponent(etas, etas ** -0.5)
    assert fit.exponent == pytest.approx(-0.5, abs=1e-12)
    assert fit.preferred == "power"
    assert not fit.drift
    assert fit.excluded == 0
    assert fit.n_used == 64


def test_fit_exponent_oracle_density():
    oracle = TwoStateOracle(0.5, 1.5)
    etas = np.geomspace(1e-4, 1e-2, 40)
    fit = fit_exponent(etas, oracle.rho(0, etas))
    assert fit.exponent == pytest.approx(-0.5, abs=0.02)
    assert fit.preferred == "power"
    assert not fit.drift


def test_fit_exponent_log_model_wins():
    etas = np.geomspace(1e-5, 1e-1, 80)
    fit = fit_exponent(etas, 3.0 - np.log(etas))
    assert fit.preferred == "log"
    assert fit.log_slope == pytest.approx(1.0, rel=1e-9)
    assert fit.log_rel_rms < 1e-3 * fit.power_rel_rms
    assert fit.drift


def test_fit_exponent_excludes_nonpositive():
    etas = np.geomspace(1e-3, 1e-1, 30)
    values = etas ** -0.5
    values[::7] = 0.0
    fit = fit_exponent(etas, values)
    assert fit.excluded == 5
    assert fit.n_used == 25
    assert fit.exponent == pytest.approx(-0.5, abs=1e-10)
    assert any("nonpositive" in n for n in fit.notes)


def test_fit_exponent_window_and_errors():
    etas = np.geomspace(1e-4, 1.0, 50)
    fit = fit_exponent(etas, etas ** 2.0, fit_window=(1e-3, 1e-1))
    assert fit.exponent == pytest.approx(2.0, abs=1e-12)
    assert fit.n_used == int(((etas >= 1e-3) & (etas <= 1e-1)).sum())
    with pytest.raises(NumericalError):
        fit_exponent(etas[:5], etas[:5] ** 2.0)
    with pytest.raises(ConfigError):
        fit_exponent(etas, etas[:10])


def test_extrapolate_to_zero():
    xs = 0.1 * 0.5 ** np.arange(6)
    limit, err = extrapolate_to_zero(xs, 2.0 + 3.0 * xs + xs ** 2)
    assert limit == pytest.approx(2.0, abs=1e-10)
    assert err < 1e-6
    with pytest.raises(NumericalError):
        extrapolate_to_zero([0.1], [1.0])

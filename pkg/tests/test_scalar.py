import math

import mpmath
import numpy as np
import pytest

from delaystab.scalar import (
    CASE_STUDY,
    ScalarPlant,
    bessel_kernel,
    j0_sqrt,
    j2_sqrt,
    perturb_plant,
    perturbed_controller,
    to_ide,
    wdes_constant,
)
from delaystab.strong import gamma0, gamma1

TAU = 0.5 + math.sqrt(2)


def test_case_study_constants():
    assert math.isclose(CASE_STUDY.tau, TAU, rel_tol=1e-15)
    assert math.isclose(CASE_STUDY.H11, 0.6, rel_tol=1e-15)
    model = to_ide(CASE_STUDY)
    assert math.isclose(model.tau, TAU, rel_tol=1e-15)
    assert model.H[0, 0, 0, 0] == pytest.approx(0.6, abs=1e-15)


def test_zero_reflection_gives_zero_gain():
    p = ScalarPlant(2.0, 1.0, 1.0, 1.0, 0.0, 0.5)
    assert to_ide(p).H[0, 0, 0, 0] == 0.0


@pytest.mark.parametrize("z", [-3.0, -0.5, 0.0, 0.7, 3.24])
def test_entire_bessel_series(z):
    x = 2 * mpmath.sqrt(z)  # imaginary for z < 0, where J turns into I
    assert abs(j0_sqrt(z) - float(mpmath.re(mpmath.besselj(0, x)))) < 1e-14
    assert abs(j2_sqrt(z) - float(mpmath.re(mpmath.besselj(2, x)))) < 1e-14


def test_kernel_without_coupling_is_constant():
    p = ScalarPlant(2.0, 1.0, 0.0, 3.0, 1.2, 0.5)
    theta = np.linspace(-p.tau, 0, 7)
    assert np.allclose(bessel_kernel(p, theta), p.a / p.tau, rtol=0, atol=1e-15)


def test_kernel_at_zero():
    p = CASE_STUDY
    expect = p.a / p.tau + p.coupling_ratio * p.tau / p.tau**2
    assert bessel_kernel(p, 0.0) == pytest.approx(expect, abs=1e-12)


def _oracle(p, theta):
    mpmath.mp.dps = 30
    tau = mpmath.mpf(p.tau)
    th = mpmath.mpf(theta)
    h = -p.coupling_ratio / tau**2 * th * (tau + th)
    d = p.coupling_ratio * (tau + th * p.b) / tau**2
    x = 2 * mpmath.sqrt(h)
    return float((p.a / tau + d) * mpmath.besselj(0, x) + d * mpmath.besselj(2, x))


@pytest.mark.parametrize("frac", [0.5, 0.1, 0.9, 1.0])
def test_kernel_against_high_precision_bessel(frac):
    theta = -frac * CASE_STUDY.tau
    assert bessel_kernel(CASE_STUDY, theta) == pytest.approx(_oracle(CASE_STUDY, theta), abs=1e-10)


def test_kernel_rejects_outside_domain():
    with pytest.raises(ValueError):
        bessel_kernel(CASE_STUDY, 0.1)
    with pytest.raises(ValueError):
        bessel_kernel(CASE_STUDY, -CASE_STUDY.tau - 0.1)


def test_kernel_is_continuous():
    theta = np.linspace(-CASE_STUDY.tau, 0, 20001)
    jumps = np.abs(np.diff(bessel_kernel(CASE_STUDY, theta)))
    assert jumps.max() < 10 * (theta[1] - theta[0])


def test_interpolation_error_is_fourth_order():
    tau = CASE_STUDY.tau
    off = -tau * (np.arange(1, 200) + 0.37) / 200
    errs = []
    for n in (16, 32, 64):
        w = to_ide(CASE_STUDY, n).w1
        errs.append(np.max(np.abs(w(off)[:, 0, 0] - bessel_kernel(CASE_STUDY, off))))
    assert errs[1] < errs[0] / 8 and errs[2] < errs[1] / 8
    assert np.max(np.abs(to_ide(CASE_STUDY).w1(off)[:, 0, 0] - bessel_kernel(CASE_STUDY, off))) < 5e-9


def test_perturbation_scaling():
    assert perturb_plant(CASE_STUDY, 0.0) == CASE_STUDY
    p = perturb_plant(CASE_STUDY, 0.1)
    assert p.tau == pytest.approx(1.1 * TAU, rel=1e-14)
    assert p.H11 == pytest.approx(0.6, rel=1e-15)
    with pytest.raises(ValueError):
        perturb_plant(CASE_STUDY, -1.0)


def test_perturbation_composes():
    a = perturb_plant(perturb_plant(CASE_STUDY, 0.1), -0.2)
    b = perturb_plant(CASE_STUDY, 1.1 * 0.8 - 1)
    for f in ("lambda1", "mu1", "sigma_pm", "sigma_mp", "Q", "R"):
        assert getattr(a, f) == pytest.approx(getattr(b, f), rel=1e-12)


@pytest.mark.parametrize("eps", [-0.3, 0.1, 0.25])
def test_perturbed_kernel_is_rescaled_nominal(eps):
    # w1 of the perturbed plant at theta equals w1(theta/(1+eps))/(1+eps)
    f = 1 + eps
    pp = perturb_plant(CASE_STUDY, eps)
    theta = np.linspace(-pp.tau, 0, 50)
    lhs = bessel_kernel(pp, theta)
    rhs = bessel_kernel(CASE_STUDY, np.clip(theta / f, -CASE_STUDY.tau, 0)) / f
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)
    ctrl = perturbed_controller(CASE_STUDY, eps, 0.1)
    assert np.allclose(ctrl.w1hat(theta)[:, 0, 0], lhs, atol=1e-9)
    assert ctrl.tauhat == pytest.approx(pp.tau, rel=1e-14)
    assert ctrl.T == pytest.approx(0.1 * TAU, rel=1e-15)


def test_nominal_controller_leaves_target_kernel():
    model = to_ide(CASE_STUDY)
    ctrl = perturbed_controller(CASE_STUDY, 0.0, 0.0)
    theta = np.linspace(-model.tau, 0, 9)[1:]
    w1_minus_w2 = model.w1(theta)[:, 0, 0] - ctrl.feedback_kernel()(theta)[:, 0, 0]
    assert np.allclose(w1_minus_w2, 0.45 / TAU, atol=1e-12)


def test_zero_wdes_is_full_cancellation():
    ctrl = perturbed_controller(CASE_STUDY, 0.0, 0.0, wdes=wdes_constant(0.0))
    theta = np.linspace(-TAU, 0, 9)[1:]
    assert np.allclose(ctrl.feedback_kernel()(theta), to_ide(CASE_STUDY).w1(theta), atol=1e-12)


def test_case_study_strong_indices():
    model = to_ide(CASE_STUDY)
    assert gamma0(model).value == pytest.approx(0.6, abs=1e-12)
    assert gamma1(model).value == pytest.approx(1.2, abs=1e-12)

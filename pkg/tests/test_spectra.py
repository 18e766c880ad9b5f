import math

import numpy as np
import pytest
from scipy.optimize import brentq

from delaystab.ide import IdeModel, char_closed
from delaystab.kernel import SampledKernel
from delaystab.scalar import CASE_STUDY, perturbed_controller, to_ide, wdes_constant
from delaystab.spectra import (
    RootSearchRegion,
    SpectrumError,
    abscissa_closed,
    abscissa_open,
    abscissa_target,
    find_roots,
)

TAU = 0.5 + math.sqrt(2)
MODEL = to_ide(CASE_STUDY)


def pure_difference(h):
    return IdeModel(H=[[h]], r=[0.5], s=[TAU - 0.5], w1=SampledKernel.zero(-TAU, 0.0))


def test_single_real_root():
    rs = find_roots(lambda z: z - 1, RootSearchRegion(-2, 3, 5))
    assert len(rs) == 1 and abs(rs.roots[0] - 1) < 1e-12


def test_difference_equation_chain():
    tau = 1.3
    rs = find_roots(lambda z: -1 + 0.6 * np.exp(-z * tau), RootSearchRegion(-2, 1, 20))
    expect = math.log(0.6) / tau
    assert all(abs(z.real - expect) < 1e-10 for z in rs.roots)
    # roots at 2 pi k / tau, k = -4..4 lie inside |Im| < 20
    ims = sorted(round(z.imag * tau / (2 * np.pi)) for z in rs.roots)
    assert ims == list(range(-4, 5))


def test_region_validation():
    with pytest.raises(ValueError):
        RootSearchRegion(1, 0, 5)
    with pytest.raises(ValueError):
        RootSearchRegion(0, 1, 5, grid_re=4)


def test_pure_difference_abscissa():
    assert abscissa_open(pure_difference(0.6)) == pytest.approx(math.log(0.6) / TAU, abs=1e-9)


def test_open_loop_continuity_in_gain():
    a = abscissa_open(pure_difference(0.6))
    b = abscissa_open(pure_difference(0.6 + 1e-6))
    assert abs(a - b) < 1e-4


def test_gamma0_precondition():
    with pytest.raises(SpectrumError):
        abscissa_open(pure_difference(1.2))


def test_full_cancellation_has_no_target_roots():
    ctrl = perturbed_controller(CASE_STUDY, 0.0, 0.0, wdes=wdes_constant(0.0))
    assert abscissa_target(MODEL, ctrl) == -math.inf


def test_constant_kernel_target_root_by_bisection():
    # -1 + c int_{-tau}^0 e^{lam theta} = 0 on the real axis: (c/lam)(1 - e^{-lam tau}) = 1
    c = 0.45 / TAU
    ctrl = perturbed_controller(CASE_STUDY, 0.0, 0.0)
    real_root = brentq(lambda s: c * (1 - math.exp(-s * TAU)) / s - 1, -5, -1e-6, xtol=1e-15)
    assert abscissa_target(MODEL, ctrl) == pytest.approx(real_root, abs=1e-8)


def test_case_study_abscissae():
    assert abscissa_open(MODEL) == pytest.approx(1.73484, abs=5e-3)
    assert abscissa_target(MODEL, perturbed_controller(CASE_STUDY, 0.0, 0.0)) == pytest.approx(-0.7468, abs=5e-3)


@pytest.mark.parametrize("T_hat, sign", [(0.05, -1), (0.18, 1)])
def test_closed_loop_sign(T_hat, sign):
    a = abscissa_closed(MODEL, perturbed_controller(CASE_STUDY, 0.0, T_hat))
    assert np.sign(a) == sign


def test_closed_loop_at_crossing_has_imaginary_root():
    ctrl = perturbed_controller(CASE_STUDY, 0.0, 0.161489)
    a, roots = abscissa_closed(MODEL, ctrl, return_roots=True)
    assert abs(a) < 1e-3
    top = max(roots.roots, key=lambda z: z.real)
    assert abs(char_closed(MODEL, ctrl, top)) < 1e-8


def test_small_filter_is_near_target_slow_roots():
    # the slow roots converge to the target roots as T -> 0
    ctrl0 = perturbed_controller(CASE_STUDY, 0.0, 0.0)
    ctrl = perturbed_controller(CASE_STUDY, 0.0, 1e-3)
    _, r0 = abscissa_target(MODEL, ctrl0, return_roots=True)
    lead = max(r0.roots, key=lambda z: z.real)
    assert abs(char_closed(MODEL, ctrl, lead)) < 1e-2 * max(1.0, abs(lead))


def test_closed_loop_warns_for_large_gamma0():
    m = IdeModel(H=[[1.1]], r=[0.5], s=[0.5], w1=SampledKernel.zero(-1.0, 0.0))
    ctrl = perturbed_controller(CASE_STUDY, 0.0, 0.1)
    with pytest.warns(RuntimeWarning):
        try:
            abscissa_closed(m, ctrl, im_max=20.0)
        except Exception:
            pass

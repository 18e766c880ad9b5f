import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaystab.ide import Fragility, IdeModel
from delaystab.kernel import SampledKernel
from delaystab.scalar import CASE_STUDY, to_ide
from delaystab.strong import classify_fragility, gamma0, gamma1, gamma_literature, spectral_radius


def random_model(rng, k, ell, m=1, scale=0.5):
    H = rng.normal(scale=scale, size=(k, ell, m, m))
    r = np.sort(rng.uniform(0.2, 1.0, k))[::-1] + 0.01 * np.arange(k)[::-1]
    s = np.sort(rng.uniform(0.2, 1.0, ell))[::-1] + 0.01 * np.arange(ell)[::-1]
    tau = r[0] + s[0]
    return IdeModel(H=H, r=r, s=s, w1=SampledKernel.zero(-tau, 0.0, m))


def test_zero_model():
    m = IdeModel(H=np.zeros((2, 2)), r=[1.0, 0.5], s=[1.0, 0.5], w1=SampledKernel.zero(-2.0, 0.0))
    assert gamma0(m).value == 0 and gamma1(m).value == 0 and gamma_literature(m).value == 0
    assert classify_fragility(m).fragility is Fragility.ROBUST_UNFILTERED


def test_case_study():
    m = to_ide(CASE_STUDY)
    assert gamma0(m).value == pytest.approx(0.6, abs=1e-9)
    assert gamma1(m).value == pytest.approx(1.2, abs=1e-9)
    assert gamma_literature(m).value == pytest.approx(0.6, abs=1e-9)
    assert classify_fragility(m).fragility is Fragility.FILTER_REQUIRED


def test_not_strongly_stabilizable():
    m = IdeModel(H=[[1.3]], r=[1.0], s=[1.0], w1=SampledKernel.zero(-2.0, 0.0))
    assert classify_fragility(m).fragility is Fragility.NOT_STRONGLY_STABILIZABLE


def test_k2_ell1_against_brute_force():
    rng = np.random.default_rng(11)
    m = random_model(rng, 2, 1)
    h = m.H[:, 0, 0, 0]
    phi = np.linspace(0, 2 * np.pi, 20001)
    brute = np.max(np.abs(h[0] + h[1] * np.exp(1j * phi)))
    assert gamma0(m).value == pytest.approx(brute, abs=1e-6)
    assert gamma0(m).value == pytest.approx(np.abs(h).sum(), abs=1e-9)


def test_matrix_blocks_k1_ell1():
    rng = np.random.default_rng(5)
    m = random_model(rng, 1, 1, m=3)
    rho = spectral_radius(m.H[0, 0])
    assert gamma0(m).value == pytest.approx(rho, abs=1e-12)
    assert gamma1(m).value == pytest.approx(2 * rho, abs=1e-12)


def test_torus_shift_invariance():
    rng = np.random.default_rng(8)
    m = random_model(rng, 2, 2, m=2)
    a, b = rng.uniform(0, 2 * np.pi, 2), rng.uniform(0, 2 * np.pi, 2)
    phase = np.exp(1j * (a[:, None] + b[None, :]))[:, :, None, None]
    # complex blocks are fine for the index even though models are real
    shifted = IdeModel.__new__(IdeModel)
    object.__setattr__(shifted, "H", m.H * phase)
    for name in ("r", "s", "w1"):
        object.__setattr__(shifted, name, getattr(m, name))
    assert gamma0(shifted).value == pytest.approx(gamma0(m).value, abs=1e-9)


def test_literature_bound_is_strict_somewhere():
    rng = np.random.default_rng(2)
    gaps = []
    for _ in range(3):
        m = random_model(rng, 3, 2)
        g0, gl = gamma0(m).value, gamma_literature(m).value
        assert gl >= g0 - 1e-9
        gaps.append(gl - g0)
    assert max(gaps) > 1e-6


def test_literature_bound_brute_force_small():
    rng = np.random.default_rng(4)
    m = random_model(rng, 2, 2)
    flat = m.H.reshape(4)
    grid = np.linspace(0, 2 * np.pi, 48, endpoint=False)
    brute = max(abs(flat[0] + sum(flat[i + 1] * np.exp(1j * p) for i, p in enumerate(ph)))
                for ph in itertools.product(grid, repeat=3))
    assert gamma_literature(m).value >= brute - 1e-12
    assert gamma_literature(m).value == pytest.approx(np.abs(flat).sum(), abs=1e-7)


def test_certificate_fields():
    rng = np.random.default_rng(1)
    res = gamma0(random_model(rng, 3, 2))
    assert res.certificate["grid_points"] > 0 and res.certificate["ascent_iterations"] > 0
    assert set(res.argmax) == {"theta", "nu"}
    assert res.argmax["theta"][0] == 0 and res.argmax["nu"][0] == 0


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.integers(1, 2), st.integers(0, 10**6))
def test_gamma1_at_least_twice_gamma0(k, ell, seed):
    m = random_model(np.random.default_rng(seed), k, ell)
    assert gamma1(m).value >= 2 * gamma0(m).value - 1e-9
    assert gamma_literature(m).value >= gamma0(m).value - 1e-9

import numpy as np
import pytest

from delaystab.continuation import (
    RESIDUAL_GATE,
    ScalarFamily,
    refine_delay_only_point,
    refine_fixed_T,
    seed_points,
    trace_both,
)
from delaystab.dsubdivision import build_curves
from delaystab.ide import char_closed
from delaystab.scalar import CASE_STUDY, perturbed_controller, to_ide

T_I = [0.3056, 0.3806, 0.1615]


@pytest.fixture(scope="module")
def family():
    return ScalarFamily(CASE_STUDY)


@pytest.fixture(scope="module")
def seeds(family):
    return seed_points(CASE_STUDY, family=family)


def test_family_matches_char_closed(family):
    model = to_ide(CASE_STUDY)
    for T, e, w in [(0.1, 0.0, 2.0), (0.3, -0.2, 11.0), (0.02, 0.15, 40.0)]:
        ref = char_closed(model, perturbed_controller(CASE_STUDY, e, T), 1j * w)
        assert abs(family(T, e, w) - ref) < 1e-12 * max(1.0, abs(ref))


def test_seeds_include_axis_crossings(seeds):
    axis = sorted(s.T for s in seeds if s.eps == 0.0)
    assert axis == pytest.approx(sorted(T_I), abs=1e-4)
    assert all(s.residual < 1e-10 for s in seeds)
    assert len(seeds) > 3  # delay-only predictions add off-axis seeds


def test_failed_refinement_is_dropped(family):
    # omega far from any crossing and a huge eps: Newton wanders off
    assert refine_fixed_T(family, 0.4, 5.0, 1e-6, maxiter=3) is None


def test_delay_only_prediction_refines_nearby(family):
    # (0.02, 0.01) sits inside the delay-only stable cone, so the nearest
    # delay-only curve point is the prediction that gets refined
    curves = build_curves(0.6, (-2, 1), 8)
    q = np.array([0.02, 0.01])
    c = min(curves, key=lambda c: np.min(np.linalg.norm(c.points[:, :2] - q, axis=1)))
    i = int(np.argmin(np.linalg.norm(c.points[:, :2] - q, axis=1)))
    pred = c.points[i]
    pt = refine_delay_only_point(family, c, i)
    full = np.array([pt.T, pt.eps, pt.omega * family.tau])
    assert np.linalg.norm(full - pred) / np.linalg.norm(pred) < 0.05


def test_traced_points_are_on_manifold(family, seeds):
    s = min((s for s in seeds if s.eps == 0.0), key=lambda s: s.T)
    curve = trace_both(family, s, arc_steps=150, bounds=((0, 0.5), (-0.3, 0.3)))
    arr = curve.array()
    assert len(arr) > 20
    assert np.all(arr[:, 3] < RESIDUAL_GATE)
    assert np.all(arr[:, 0] > 0) and np.all(arr[:, 2] > 0)
    # recompute residuals independently
    for T, e, w, _ in arr[:: max(1, len(arr) // 10)]:
        assert abs(family(T, e, w)) < RESIDUAL_GATE


def test_chart_axis_intercepts(case_chart):
    chart, _ = case_chart
    Ts = chart.level_crossings(0.0)
    for T in T_I:
        assert np.min(np.abs(Ts - T)) < 1e-3
    # any other intercept is a traced endpoint, never a spurious crossing
    assert len(Ts) == 3


def test_chart_region_is_stretched(case_chart):
    chart, _ = case_chart
    assert chart.max_stable_T(-0.05) > chart.max_stable_T(0.05)


def test_chart_probes(case_chart):
    chart, _ = case_chart
    assert all(T > 0 for (T, _), _, _ in chart.probes)
    family = chart.family
    for (T, e), sign, a in chart.probes[::7]:
        assert np.sign(family.abscissa(T, e)) == sign
    assert np.sign(family.abscissa(0.05, 0.0)) == -1
    assert np.sign(family.abscissa(0.18, 0.0)) == 1


def test_central_region_contains_centre(case_chart):
    chart, _ = case_chart
    poly = chart.central_region
    assert poly[:, 0].min() < chart.centre[0] < poly[:, 0].max()
    assert poly[:, 0].max() <= 0.1615 + 1e-3 or poly[:, 0].max() <= 0.5


def _delay_only_count(T_hat, eps_range, curves):
    n = 0
    for c in curves:
        T, e = c.T, c.eps
        cross = np.nonzero(np.diff(np.sign(T - T_hat)))[0]
        hit = False
        for i in cross:
            s = (T_hat - T[i]) / (T[i + 1] - T[i])
            ev = e[i] + s * (e[i + 1] - e[i])
            hit |= eps_range[0] <= ev <= eps_range[1]
        n += hit
    return n


def test_clustering_near_origin():
    curves = build_curves(0.6, (-2, 1), 20, 800)
    near = _delay_only_count(0.01, (0.01, 0.02), curves)
    far = _delay_only_count(0.1, (0.01, 0.02), curves)
    assert near > far

import math

import numpy as np
import pytest

from flab.bridge import apply_J
from flab.geodesic import (
    ChartExit,
    ConjugateReached,
    GeodesicControl,
    KahlerHypothesisViolated,
    PoleAt,
    conjugate_point,
    ct_lambda,
    distance_bvp,
    distance_hessian,
    index_form,
    integrate_geodesic,
    jacobi_matrix,
    parallel_transport,
    r11_direct,
    riccati_probe,
    s_lambda,
)

from _support import metric

E1_1 = np.array([1.0, 0.0])
E1_2 = np.array([1.0, 0.0, 0.0, 0.0])


def circle_path(n, L):
    """FS(n) geodesic from z1 = 1/2 in the i e1 direction.

    Its great circle avoids the point at infinity of the chart (|z1| <= 2)
    and closes up at length pi.
    """
    spec = metric("fubini_study", n)
    x0 = np.zeros(2 * n)
    x0[0] = 0.5
    y0 = np.zeros(2 * n)
    y0[n] = 1.0
    return integrate_geodesic(spec, x0, y0, L, normalize=True)


# ---------------------------------------------------------------------------
# comparison functions


def test_comparison_function_values():
    assert ct_lambda(1.0, np.pi / 2) == pytest.approx(0.0, abs=1e-15)
    assert ct_lambda(0.0, 2.0) == 0.5
    assert ct_lambda(-1.0, 1.0) == pytest.approx(1.3130352855, abs=1e-10)
    assert s_lambda(1.0, np.pi / 2) == pytest.approx(1.0)
    assert s_lambda(-4.0, 1.0) == pytest.approx(math.sinh(2.0) / 2)


def test_comparison_functions_continuous_at_zero():
    for t in (0.3, 1.0, 2.5):
        for lam in (1e-8, -1e-8):
            assert abs(ct_lambda(lam, t) - ct_lambda(0.0, t)) < 1e-8
            assert abs(s_lambda(lam, t) - s_lambda(0.0, t)) < 1e-7


def test_pole_raised():
    with pytest.raises(PoleAt):
        ct_lambda(1.0, np.pi)
    assert np.isnan(ct_lambda(4.0, np.array([2.0]), allow_pole=True)[0])


# ---------------------------------------------------------------------------
# geodesics and transport


def test_euclidean_geodesic_is_a_line(rng):
    spec = metric("euclidean", 2)
    x0 = rng.uniform(-1, 1, 4)
    y0 = rng.standard_normal(4)
    y0 /= np.linalg.norm(y0)
    path = integrate_geodesic(spec, x0, y0, 2.0)
    t = np.linspace(0, 2, 9)
    x, T, E = path.state(t)
    np.testing.assert_allclose(x[0], x0 + t[:, None] * y0, atol=1e-12)
    np.testing.assert_allclose(parallel_transport(path, E1_2, t)[0], np.tile(E1_2, (9, 1)),
                               atol=1e-13)


@pytest.mark.parametrize("name, closed", [("fubini_study", np.tan), ("complex_hyperbolic", np.tanh)])
def test_closed_form_radial_geodesics(name, closed):
    spec = metric(name, 1)
    L = np.pi / 2 - 0.1 if name == "fubini_study" else 1.5
    path = integrate_geodesic(spec, np.zeros(2), E1_1, L)
    t = np.linspace(0, L, 40)
    x, _, _ = path.state(t)
    np.testing.assert_allclose(x[0, :, 0], closed(t), atol=1e-7, rtol=1e-8)
    assert np.max(np.abs(x[0, :, 1])) < 1e-10


def test_path_invariants_on_fubini_study(rng):
    spec = metric("fubini_study", 2)
    x0 = rng.uniform(-0.3, 0.3, (4, 4))
    y0 = rng.standard_normal((4, 4))
    path = integrate_geodesic(spec, x0, y0, 1.0, normalize=True)
    t = np.linspace(0.05, 0.95, 15)
    assert np.max(path.speed_residual(t)) < 1e-8
    assert np.max(path.equation_residual()) < 1e-8
    assert np.max(path.frame_drift(t)) < 1e-7
    # J T(0) transports to J T(t)
    _, T, E = path.state(t)
    np.testing.assert_allclose(E[..., -2], apply_J(T), atol=1e-7)
    X0 = rng.standard_normal(4)
    X = np.stack([parallel_transport(path, X0, t)[b] for b in range(path.count)])
    from flab.partials import derivative_tensor, metric_jet

    g = 0.5 * derivative_tensor(metric_jet(spec, path.state(t)[0], T, ((0, 2),)), 2)
    norms = np.einsum("bti,btij,btj->bt", X, g, X)
    assert np.max(np.abs(norms - norms[:, :1])) < 1e-7


def test_unit_speed_required():
    spec = metric("euclidean", 1)
    with pytest.raises(ValueError):
        integrate_geodesic(spec, np.zeros(2), np.array([1.1, 0.0]), 1.0)
    with pytest.raises(ValueError):
        integrate_geodesic(spec, np.zeros(2), E1_1, 0.0)


def test_chart_exit_flagged():
    spec = metric("euclidean", 1)
    ctl = GeodesicControl(chart_radius=2.0)
    with pytest.raises(ChartExit):
        integrate_geodesic(spec, np.zeros(2), E1_1, 5.0, ctl)
    both = integrate_geodesic(spec, np.array([[0.0, 0.0], [0.0, 0.0]]),
                              np.array([[1.0, 0.0], [0.0, 1.0]]), 1.5, ctl)
    assert both.excluded == []
    part = integrate_geodesic(spec, np.array([[0.0, 0.0], [-1.5, 0.0]]),
                              np.array([[0.0, 1.0], [-1.0, 0.0]]), 1.5, ctl)
    assert part.excluded == [1] and list(part.kept) == [0]


def test_csv_export():
    spec = metric("euclidean", 1)
    text = integrate_geodesic(spec, np.zeros(2), E1_1, 1.0).to_csv(samples=3)
    lines = text.strip().splitlines()
    assert lines[0].split(",")[0] == "t" and len(lines) == 4


# ---------------------------------------------------------------------------
# Jacobi fields and conjugate points


def test_euclidean_jacobi_is_linear():
    jac = jacobi_matrix(integrate_geodesic(metric("euclidean", 2), np.zeros(4), E1_2, 2.0))
    t = np.array([0.5, 1.5])
    np.testing.assert_allclose(jac.A(t)[0], t[:, None, None] * np.eye(3), atol=1e-10)
    assert np.isnan(conjugate_point(jac)[0])


@pytest.mark.parametrize("n", [1, 2])
def test_fubini_study_jacobi_closed_forms(n):
    jac = jacobi_matrix(circle_path(n, 2.0))
    t = np.linspace(0.1, 1.9, 7)
    A = jac.A(t)[0]
    # the last T-perp column is JT: a'' + 4a = 0; the others: a'' + a = 0
    np.testing.assert_allclose(A[:, -1, -1], np.sin(2 * t) / 2, atol=1e-8)
    for a in range(jac.m - 1):
        np.testing.assert_allclose(A[:, a, a], np.sin(t), atol=1e-8)
    assert np.max(jac.wronskian(t)) < 1e-7
    assert conjugate_point(jac)[0] == pytest.approx(np.pi / 2, abs=1e-6)


def test_index_form_flat():
    jac = jacobi_matrix(integrate_geodesic(metric("euclidean", 2), np.zeros(4), E1_2, 1.0))
    e = np.eye(4)[0]
    val = index_form(jac, lambda t: np.sin(np.pi * t) * e, lambda t: np.pi * np.cos(np.pi * t) * e)
    assert val[0] == pytest.approx(np.pi**2 / 2, abs=1e-7)


def test_index_form_vanishing_instances():
    jac = jacobi_matrix(circle_path(1, np.pi / 2))
    JT = np.array([1.0, 0.0])
    val = index_form(jac, lambda t: np.sin(2 * t) * JT, lambda t: 2 * np.cos(2 * t) * JT)
    assert abs(val[0]) < 1e-6

    jac = jacobi_matrix(circle_path(2, np.pi))
    total = 0.0
    for i in range(2):
        e = np.eye(4)[i]
        total += index_form(jac, lambda t: np.sin(t) * e, lambda t: np.cos(t) * e)[0]
    assert abs(total) < 1e-5
    # the holomorphic block has curvature 4, so the same field is strictly negative there
    JT = np.eye(4)[2]
    assert index_form(jac, lambda t: np.sin(t) * JT, lambda t: np.cos(t) * JT)[0] == pytest.approx(
        -1.5 * np.pi, abs=1e-6)


# ---------------------------------------------------------------------------
# distance Hessian


def test_euclidean_distance_hessian():
    jac = jacobi_matrix(integrate_geodesic(metric("euclidean", 2), np.zeros(4), E1_2, 1.0))
    pr = distance_hessian(jac, 1.0)
    np.testing.assert_allclose(pr.H[0][:3, :3], np.eye(3), atol=1e-9)
    assert pr.box[0] == pytest.approx(3.0, abs=1e-9)
    assert pr.box_perp[0] == pytest.approx(2.0, abs=1e-9)
    assert pr.HVV[0] == pytest.approx(1.0, abs=1e-9)
    assert pr.HT_row[0] == 0.0


@pytest.mark.parametrize("name, lam", [("fubini_study", 1.0), ("complex_hyperbolic", -1.0)])
def test_model_distance_hessian(name, lam):
    spec = metric(name, 2)
    y0 = np.array([0.6, 0.0, 0.0, 0.8])
    jac = jacobi_matrix(integrate_geodesic(spec, np.zeros(4), y0, 0.6))
    pr = distance_hessian(jac, 0.5)
    assert pr.box_perp[0] == pytest.approx(2 * ct_lambda(lam, 0.5), abs=1e-4)
    assert pr.HVV[0] == pytest.approx(2 * ct_lambda(lam, 1.0), abs=1e-4)
    assert pr.index_crosscheck[0] < 1e-5


def test_conjugate_point_blocks_hessian():
    jac = jacobi_matrix(circle_path(1, 1.7))
    with pytest.raises(ConjugateReached):
        distance_hessian(jac, 1.65)


# ---------------------------------------------------------------------------
# distance BVP and r11


def test_distance_bvp_closed_forms():
    r, y0, info = distance_bvp(metric("euclidean", 2), np.zeros(4), E1_2)
    assert r == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(y0, E1_2, atol=1e-10)
    r, _, info = distance_bvp(metric("fubini_study", 1), np.zeros(2), E1_1)
    assert r == pytest.approx(np.pi / 4, abs=1e-9)
    assert info["residual"] < 1e-9
    r, _, _ = distance_bvp(metric("complex_hyperbolic", 1), np.zeros(2), 0.5 * E1_1, certify=True)
    assert r == pytest.approx(math.atanh(0.5), abs=1e-9)


def test_r11_closed_forms():
    r11, _ = r11_direct(metric("euclidean", 1), np.zeros(2), E1_1)
    assert r11.real == pytest.approx(-0.25, abs=1e-6)
    # FS(1) at distance 0.5: the target is z = tan(0.5)
    r11, info = r11_direct(metric("fubini_study", 1), np.zeros(2), np.tan(0.5) * E1_1)
    assert info["r"] == pytest.approx(0.5, abs=1e-9)
    assert r11.real == pytest.approx(-ct_lambda(1.0, 1.0) / 2, abs=1e-3)
    assert abs(r11.imag) < 1e-3


def test_hvv_r11_identity_off_axis():
    spec = metric("fubini_study", 2)
    p = np.array([0.1, -0.05, 0.0, 0.1])
    q = np.array([0.4, 0.2, -0.2, 0.3])
    r11, info = r11_direct(spec, p, q)
    path = integrate_geodesic(spec, p, info["y0"], info["r"])
    pr = distance_hessian(jacobi_matrix(path), info["r"], crosscheck=False)
    assert abs(pr.HVV[0] + 4 * r11.real) < 1e-3


# ---------------------------------------------------------------------------
# Riccati probe


@pytest.mark.parametrize("name, lam", [("fubini_study", 1.0), ("complex_hyperbolic", -1.0),
                                       ("euclidean", 0.0)])
def test_riccati_model_equality(name, lam):
    spec = metric(name, 1)
    jac = jacobi_matrix(integrate_geodesic(spec, np.zeros(2), E1_1, 1.2))
    out = riccati_probe(jac, lam)
    np.testing.assert_allclose(out["f"][0], out["model"], atol=1e-4)
    assert np.max(np.abs(out["slack"])) < 1e-4
    assert abs(out["tf_limit"][0] - 0.25) < 1e-3


def test_riccati_requires_kahler():
    spec = metric("hermitian_nonkahler")
    x0 = np.array([0.0, 1.0, 0.0, 0.0])
    jac = jacobi_matrix(integrate_geodesic(spec, x0, E1_2, 0.5, normalize=True))
    with pytest.raises(KahlerHypothesisViolated):
        riccati_probe(jac, 0.0)

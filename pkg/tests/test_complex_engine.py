import numpy as np
import pytest

from flab.complex_engine import (
    NotStronglyPseudoconvex,
    complex_spray,
    complex_tensors,
    holomorphic_curvature,
    kahler_residuals,
)
from flab.metric import metric_from_expression
from flab.partials import EvalPoint

from _support import metric


@pytest.mark.parametrize("name, H", [("fubini_study", 4.0), ("complex_hyperbolic", -4.0),
                                     ("euclidean", 0.0), ("complex_minkowski_quartic", 0.0)])
@pytest.mark.parametrize("n", [1, 2])
def test_constant_holomorphic_curvature(name, H, n, rng):
    spec = metric(name, n)
    x = rng.uniform(-0.3, 0.3, (8, 2 * n))
    y = rng.standard_normal((8, 2 * n))
    t = complex_tensors(spec, x, y)
    np.testing.assert_allclose(t.H.real, H, atol=1e-8)
    np.testing.assert_allclose(t.H.imag, 0, atol=1e-9)
    np.testing.assert_allclose(t.H_simple.real, H, atol=1e-8)


def test_levi_matrix_of_fubini_study_at_origin():
    spec = metric("fubini_study", 2)
    t = complex_tensors(spec, np.zeros(4), np.array([1.0, 0.5, 0.0, 0.0]), curvature=False)
    np.testing.assert_allclose(t.L, np.eye(2), atol=1e-14)
    assert np.max(np.abs(t.N)) < 1e-14


def test_hermitian_nonkahler_hand_value():
    # G = (1 + |z2|^2)|v1|^2 + |v2|^2; at z = (0, 1), v = (1, 0):
    # Gamma^1_{1;2} = conj(z2) / (1 + |z2|^2) = 1/2, Gamma^1_{2;1} = 0
    spec = metric("hermitian_nonkahler")
    p = EvalPoint.from_complex([0.0, 1.0], [1.0, 0.0])
    t = complex_tensors(spec, p.x, p.y, curvature=False)
    assert t.Gam[0, 0, 1] == pytest.approx(0.5, abs=1e-14)
    assert t.Gam[0, 1, 0] == pytest.approx(0.0, abs=1e-14)
    strong, weak = kahler_residuals(spec, p)
    assert strong == pytest.approx(0.5, abs=1e-14)
    # G_1 = 2 conj(v1); T^1_{1 2} v^2 vanishes with v2 = 0, but T^1_{2 1} v^1 does not
    assert weak == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("name", ["fubini_study", "complex_hyperbolic", "complex_minkowski_quartic"])
def test_kahler_metrics_have_symmetric_connection(name, rng):
    spec = metric(name, 2)
    p = EvalPoint(rng.uniform(-0.3, 0.3, (10, 4)), rng.standard_normal((10, 4)))
    strong, weak = kahler_residuals(spec, p)
    assert np.max(strong) < 1e-10 and np.max(weak) < 1e-10


def test_complex_spray_is_two_homogeneous(rng):
    spec = metric("fubini_study", 2)
    x, y = rng.uniform(-0.3, 0.3, 4), rng.standard_normal(4)
    zeta = 0.7 - 1.3j
    v = (y[:2] + 1j * y[2:]) * zeta
    y2 = np.concatenate([v.real, v.imag])
    np.testing.assert_allclose(complex_spray(spec, x, y2), zeta**2 * complex_spray(spec, x, y),
                               rtol=1e-12)


def test_holomorphic_curvature_scale_invariant(rng):
    spec = metric("hermitian_nonkahler")
    x, y = rng.uniform(-0.5, 0.5, 4), rng.standard_normal(4)
    h1 = holomorphic_curvature(spec, EvalPoint(x, y))
    h2 = holomorphic_curvature(spec, EvalPoint(x, 3 * y))
    assert h1 == pytest.approx(h2, rel=1e-10)


def test_non_pseudoconvex_rejected():
    spec = metric_from_expression("abs2(v1)", 2)
    with pytest.raises(NotStronglyPseudoconvex):
        complex_tensors(spec, np.zeros(4), np.array([1.0, 0.0, 0.0, 0.0]))

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flab.bridge import (
    DegenerateDimension,
    HomogeneitySubject,
    J_matrix,
    apply_J,
    homogeneity_check,
    j_invariance_check,
    orthogonal_ricci,
    orthonormal_frame,
    parallelism_residual,
    spray_correspondence,
)
from flab.complex_engine import holomorphic_curvature
from flab.partials import EvalPoint
from flab.real_engine import flag_curvature, real_tensors

from _support import CATALOG_CASES, metric

finite = st.floats(-3, 3, allow_nan=False)


@given(st.lists(finite, min_size=6, max_size=6))
def test_J_squares_to_minus_one(y):
    y = np.array(y)
    np.testing.assert_allclose(apply_J(apply_J(y)), -y)
    np.testing.assert_allclose(J_matrix(3) @ y, apply_J(y))


@pytest.mark.parametrize("text, p, q", [
    ("v1^2 * conj(v2)", 2, 1),
    ("abs2(v1) + abs2(v2)", 1, 1),
    ("v1 * v2 * (1 + abs2(z1))", 2, 0),
    ("conj(v1)^3", 0, 3),
])
def test_homogeneity_forms_agree(text, p, q, rng):
    subj = HomogeneitySubject.from_text(text, 2, p, q)
    pt = EvalPoint(rng.uniform(-0.5, 0.5, 4), rng.standard_normal(4))
    res = homogeneity_check(subj, pt)
    assert max(float(np.max(r)) for r in res.values()) < 1e-12
    zeta = 0.4 + 1.1j
    assert subj.declared_residual(pt.x, pt.y, zeta) < 1e-12


def test_wrong_bidegree_detected(rng):
    subj = HomogeneitySubject.from_text("v1^2 * conj(v2)", 2, 1, 2)
    pt = EvalPoint(rng.uniform(-0.5, 0.5, 4), rng.standard_normal(4))
    res = homogeneity_check(subj, pt)
    # total degree is right, the phase forms are not
    assert res["R_y"] < 1e-12 and res["I_y"] < 1e-12
    assert max(res["R_u"], res["I_u"], res["H_v"], res["H_vbar"]) > 1e-2


@pytest.mark.parametrize("name, n", CATALOG_CASES)
def test_universal_j_identities_hold_for_every_metric(name, n, rng):
    spec = metric(name, n)
    x = rng.uniform(-0.3, 0.3, (10, 2 * n))
    y = rng.standard_normal((10, 2 * n))
    X = rng.standard_normal((10, 2 * n))
    r = j_invariance_check(real_tensors(spec, x, y), X)
    for key in "abc":
        assert np.max(r[key]) < 1e-9
    hermitian = "hermitian" in spec.declared_properties
    assert (np.max(r["d"]) < 1e-9) == hermitian
    assert (np.max(r["cartan"]) < 1e-9) == hermitian


@pytest.mark.parametrize("name", ["fubini_study", "complex_hyperbolic", "complex_minkowski_quartic"])
def test_spray_correspondence_and_parallelism(name, rng):
    spec = metric(name, 2)
    x = rng.uniform(-0.3, 0.3, (10, 4))
    y = rng.standard_normal((10, 4))
    assert np.max(spray_correspondence(spec, x, y)) < 1e-10
    for r in parallelism_residual(spec, x, y):
        assert np.max(r) < 1e-10


def test_parallelism_fails_off_kahler():
    spec = metric("hermitian_nonkahler")
    p = EvalPoint.from_complex([0.2, 1.0], [1.0, 0.5])
    assert max(float(np.max(r)) for r in parallelism_residual(spec, p.x, p.y)) > 1e-2


@pytest.mark.parametrize("name", ["fubini_study", "complex_hyperbolic", "euclidean"])
@pytest.mark.parametrize("n", [1, 2])
def test_holomorphic_equals_holomorphic_flag_curvature(name, n, rng):
    spec = metric(name, n)
    for _ in range(5):
        p = EvalPoint(rng.uniform(-0.3, 0.3, 2 * n), rng.standard_normal(2 * n))
        K = flag_curvature(real_tensors(spec, p.x, p.y), apply_J(p.y))
        assert abs(holomorphic_curvature(spec, p) - K) < 1e-8


def test_orthonormal_frame_layout(rng):
    spec = metric("complex_minkowski_quartic", 2)
    x, y = rng.uniform(-0.3, 0.3, 4), rng.standard_normal(4)
    t = real_tensors(spec, x, y)
    E = orthonormal_frame(t.g, y)
    np.testing.assert_allclose(E.T @ t.g @ E, np.eye(4), atol=1e-12)
    F = np.sqrt(spec.G(x, y))
    np.testing.assert_allclose(E[:, -1], y / F, atol=1e-13)
    np.testing.assert_allclose(E[:, -2], apply_J(y) / F, atol=1e-13)


def test_orthogonal_ricci_of_fubini_study(rng):
    spec = metric("fubini_study", 2)
    x, y = rng.uniform(-0.3, 0.3, 4), rng.standard_normal(4)
    trace, frame = orthogonal_ricci(spec, x, y)
    assert trace == pytest.approx(2.0, abs=1e-8)
    assert frame == pytest.approx(2.0, abs=1e-8)
    with pytest.raises(DegenerateDimension):
        orthogonal_ricci(metric("fubini_study", 1), x[:2], y[:2])

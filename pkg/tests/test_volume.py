import math

import numpy as np
import pytest

from flab.metric import metric_from_expression
from flab.real_engine import sphere_rule
from flab.volume import (
    MonteCarloConfig,
    ball_volumes,
    measure_density,
    model_metric,
    volume_ratio,
)

from _support import metric

SMALL = MonteCarloConfig(directions=120, radial=400, seed=3, chunk=60, s_samples=4)


def fs_ball(n, r):
    return math.pi**n * math.sin(r) ** (2 * n) / math.factorial(n)


def test_densities_of_riemannian_metrics(rng):
    spec = metric("fubini_study", 2)
    x = rng.uniform(-0.4, 0.4, (5, 4))
    s = 1 + np.sum(x**2, 1)
    # det of the real FS metric in dimension 4 is s^-6
    np.testing.assert_allclose(measure_density(spec, x, "riemannian_det"), s**-3, rtol=1e-12)
    np.testing.assert_allclose(measure_density(spec, x, "busemann_hausdorff"), s**-3, rtol=1e-12)


def test_busemann_hausdorff_of_a_minkowski_norm():
    # quadrature rule against plain Monte Carlo on 400k directions
    spec = metric("complex_minkowski_quartic", 2)
    W = np.random.default_rng(5).standard_normal((400_000, 4))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    vals = spec.G(np.zeros_like(W), W) ** -2.0
    ref = 1.0 / vals.mean()
    err = ref * vals.std() / vals.mean() / math.sqrt(len(W))
    est = measure_density(spec, np.zeros(4), "busemann_hausdorff")
    assert abs(est - ref) < 4 * err
    # the rule has converged: a finer level changes nothing
    fine = measure_density(spec, np.zeros(4), "busemann_hausdorff", sphere_rule(2, 24))
    assert est == pytest.approx(fine, rel=1e-6)


@pytest.mark.parametrize("n", [1, 2])
def test_fubini_study_ball_volumes_match_closed_form(n):
    radii = (0.3, 0.6, 0.9)
    est = ball_volumes(metric("fubini_study", n), np.zeros(2 * n), radii, config=SMALL)
    ref = np.array([fs_ball(n, r) for r in radii])
    assert np.all(np.abs(est.volumes - ref) < 4 * est.stderr + 1e-12)


def test_euclidean_ball_is_exact_per_direction():
    est = ball_volumes(metric("euclidean", 2), np.zeros(4), (0.5, 1.0), config=SMALL)
    ref = np.pi**2 / 2 * np.array([0.5, 1.0]) ** 4
    assert np.all(np.abs(est.volumes - ref) < 4 * est.stderr)


def test_volume_ratio_report_and_determinism():
    spec = metric("fubini_study", 2)
    est, rep = volume_ratio(spec, 1.0, config=SMALL)
    assert rep.hypothesis_ok
    assert len(rep.rows) == 3
    assert rep.details["max_agreement"] < 1.0
    assert rep.passed
    est2, rep2 = volume_ratio(spec, 1.0, config=SMALL)
    assert rep.to_json() == rep2.to_json()
    threaded = MonteCarloConfig(**{**SMALL.__dict__, "workers": 2})
    est3, _ = volume_ratio(spec, 1.0, config=threaded)
    np.testing.assert_array_equal(est.volumes, est3.volumes)


def test_s_curvature_gate_reports_unverified():
    spec = metric_from_expression("(1 + abs2(z1)) * sqrt(abs2(v1)^2 + abs2(v2)^2)", 2)
    cfg = MonteCarloConfig(directions=20, radial=50, seed=0, chunk=20, s_samples=3)
    _, rep = volume_ratio(spec, 0.0, radii=(0.2, 0.4), config=cfg)
    assert not rep.hypothesis_ok
    assert rep.status == "hypothesis unverified"


def test_model_metric_choices():
    assert model_metric(1, 2).name == "fubini_study"
    assert model_metric(-1.0, 1).name == "complex_hyperbolic"
    with pytest.raises(ValueError):
        model_metric(0.5, 2)

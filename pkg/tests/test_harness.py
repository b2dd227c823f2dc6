import math

import numpy as np
import pytest

from flab.geodesic import ct_lambda
from flab.harness import (
    SUITES,
    run_suite,
    sample_hypotheses,
    verify_diameter,
    verify_laplacian_comparison,
)
from flab.metric import Sampling

from _support import metric

KAHLER = ["euclidean", "fubini_study", "complex_hyperbolic", "complex_minkowski_quartic"]


@pytest.mark.parametrize("name", KAHLER + ["hermitian_nonkahler"])
@pytest.mark.parametrize("suite", ["homogeneity", "j_invariance"])
def test_universal_suites_pass_everywhere(suite, name):
    rep = run_suite(suite, metric(name), Sampling(seed=1, count=20))
    assert rep.passed, rep.notes


@pytest.mark.parametrize("name", KAHLER)
@pytest.mark.parametrize("suite", ["kahler", "parallelism", "spray_correspondence"])
def test_kahler_suites(suite, name):
    assert run_suite(suite, metric(name), Sampling(seed=2, count=20)).passed


@pytest.mark.parametrize("suite", ["kahler", "parallelism", "spray_correspondence"])
def test_kahler_suites_fail_off_kahler(suite):
    rep = run_suite(suite, metric("hermitian_nonkahler"), Sampling(seed=2, count=20))
    assert rep.status == "fail"


def test_j_invariance_details_separate_the_two_statements():
    rep = run_suite("j_invariance", metric("complex_minkowski_quartic"), Sampling(count=20))
    d = rep.details
    assert d["universal_pass"] and not d["full_invariance_pass"]
    assert d["d"] > 1e-3 and d["cartan"] > 1e-3
    assert any("partial" in note for note in rep.notes)
    rep = run_suite("j_invariance", metric("fubini_study"), Sampling(count=20))
    assert rep.details["full_invariance_pass"] and rep.details["cartan_vanishes"]


@pytest.mark.parametrize("name, H", [("fubini_study", 4.0), ("complex_hyperbolic", -4.0)])
def test_cross_engine(name, H):
    rep = run_suite("cross_engine", metric(name), Sampling(seed=4, count=20))
    assert rep.passed
    assert rep.details["H_min"] == pytest.approx(H, abs=1e-6)
    assert rep.details["H_max"] == pytest.approx(H, abs=1e-6)


def test_unevaluable_samples_are_counted():
    # a tiny tolerance fails; an unknown suite is an error
    rep = run_suite("homogeneity", metric("euclidean"), Sampling(count=5), tol=0.0)
    assert rep.status == "fail"
    with pytest.raises(ValueError):
        run_suite("nope", metric("euclidean"))
    assert set(SUITES) == {"homogeneity", "j_invariance", "kahler", "spray_correspondence",
                           "parallelism", "cross_engine"}


def test_hypothesis_sampling():
    h = sample_hypotheses(metric("fubini_study"), 1.0)
    assert h["H_ok"] and h["ric_perp_ok"]
    assert h["ric_perp_min"] == pytest.approx(2.0, abs=1e-6)
    h = sample_hypotheses(metric("complex_hyperbolic"), 1.0)
    assert not h["H_ok"]


def test_laplacian_flat_values():
    rep = verify_laplacian_comparison(metric("euclidean", 2), 0.0, radii=[0.5, 1.0], directions=3)
    assert rep.passed
    for row in rep.rows:
        assert row["box_perp"] == pytest.approx(2 / row["r"], abs=1e-6)
        assert row["HVV"] == pytest.approx(1 / row["r"], abs=1e-6)


def test_laplacian_model_equality_on_fubini_study():
    rep = verify_laplacian_comparison(metric("fubini_study", 2), 1.0, radii=[0.4, 1.0],
                                      directions=3)
    assert rep.passed
    for row in rep.rows:
        assert abs(row["box_perp"] - 2 * ct_lambda(1.0, row["r"])) < 1e-4
        assert abs(row["HVV"] - 2 * ct_lambda(1.0, 2 * row["r"])) < 1e-4
    assert rep.details["max_index_crosscheck"] < 1e-5


def test_laplacian_wrong_lambda_is_unverified():
    rep = verify_laplacian_comparison(metric("complex_hyperbolic", 2), 1.0, radii=[0.3],
                                      directions=2)
    assert rep.status == "hypothesis unverified"


def test_diameter_on_fubini_study_one():
    rep = verify_diameter(metric("fubini_study", 1), 1.0, count=4)
    assert rep.passed
    for row in rep.rows:
        assert row["t_conj"] == pytest.approx(math.pi / 2, abs=1e-6)
    with pytest.raises(ValueError, match="positive"):
        verify_diameter(metric("euclidean", 1), 0.0)

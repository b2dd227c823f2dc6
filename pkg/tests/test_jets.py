import itertools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from flab import jets
from flab.jets import Jet, JetDomainError, Layout


def _vars(lay, point):
    return [Jet.variable(lay, k, point[k]) for k in range(len(point))]


def _sympy_partials(expr, syms, point, lay):
    """All partials of ``expr`` kept by ``lay`` at ``point`` (sympy oracle)."""
    out = {}
    subs = dict(zip(syms, point))
    for e in lay.exps:
        d = expr
        for s, k in zip(syms, e):
            if k:
                d = sp.diff(d, s, int(k))
        out[tuple(int(k) for k in e)] = float(d.subs(subs))
    return out


@pytest.mark.parametrize("corners", [((2, 3),), ((1, 2), (0, 3)), ((2, 2), (1, 3), (0, 4))])
def test_composite_function_matches_sympy(corners):
    x, y1, y2 = sp.symbols("x y1 y2")
    expr = sp.exp(x * y1) * sp.sqrt(1 + x**2 + y2**2) / (2 + y1 * y2) + sp.log(3 + x + y1)
    point = (0.3, -0.4, 0.7)
    lay = Layout.get(1, 2, corners)
    X, Y1, Y2 = _vars(lay, point)
    jet = jets.exp(X * Y1) * jets.sqrt(1 + X * X + Y2 * Y2) / (2 + Y1 * Y2) + jets.log(3 + X + Y1)
    ref = _sympy_partials(expr, (x, y1, y2), point, lay)
    for e, val in ref.items():
        assert jet.partial(e) == pytest.approx(val, rel=1e-11, abs=1e-11)


def test_layout_is_downward_closed():
    lay = Layout.get(2, 2, ((2, 1), (0, 3)))
    kept = {tuple(e) for e in lay.exps.tolist()}
    for e in kept:
        for k in range(4):
            if e[k]:
                lower = list(e)
                lower[k] -= 1
                assert tuple(lower) in kept
    for e in kept:
        dx, dy = e[0] + e[1], e[2] + e[3]
        assert (dx <= 2 and dy <= 1) or (dx == 0 and dy <= 3)


coef = st.floats(-2, 2, allow_nan=False)


@given(st.lists(coef, min_size=3, max_size=3), st.lists(coef, min_size=3, max_size=3))
def test_product_is_commutative_and_associative(a, b):
    lay = Layout.get(1, 1, ((2, 2),))
    X, Y = _vars(lay, (0.2, 0.5))
    p = a[0] + a[1] * X + a[2] * Y * Y
    q = b[0] + b[1] * Y + b[2] * X * Y
    r = 1 + X + Y
    np.testing.assert_allclose((p * q).c, (q * p).c, atol=1e-13)
    np.testing.assert_allclose(((p * q) * r).c, (p * (q * r)).c, atol=1e-12)


@given(st.floats(0.3, 3.0), st.floats(-1, 1))
def test_power_inverse_roundtrip(base, shift):
    lay = Layout.get(1, 2, ((2, 3),))
    X, Y1, Y2 = _vars(lay, (shift, 0.1, -0.2))
    a = base + X * X + 0.3 * Y1 - 0.1 * Y2 * X
    one = a * jets.power(a, -1)
    np.testing.assert_allclose(one.c, Jet.constant(lay, 1.0).c, atol=1e-12)
    half = jets.power(a, 0.5)
    np.testing.assert_allclose((half * half).c, a.c, atol=1e-12)
    np.testing.assert_allclose(jets.exp(jets.log(a)).c, a.c, atol=1e-11)


def test_batched_coefficients_match_pointwise():
    lay = Layout.get(1, 1, ((2, 3),))
    pts = np.array([0.1, 0.5, 1.5])
    X = Jet.variable(lay, 0, pts)
    Y = Jet.variable(lay, 1, 2 * pts)
    f = jets.sqrt(1 + X * Y) * Y
    for k, p in enumerate(pts):
        Xs = Jet.variable(lay, 0, p)
        Ys = Jet.variable(lay, 1, 2 * p)
        np.testing.assert_allclose(f.c[:, k], (jets.sqrt(1 + Xs * Ys) * Ys).c, rtol=1e-14)


def test_solve_matches_inverse_series():
    lay = Layout.get(1, 1, ((2, 2),))
    X, Y = _vars(lay, (0.1, 0.2))
    A = jets.stack([jets.stack([2 + X, Y], -1), jets.stack([X * Y, 3 + Y * Y], -1)], -2)
    b = jets.stack([1 + X, Y - X], -1)
    sol = jets.solve(A, b)
    back = jets.einsum("...ij,...j->...i", A, sol)
    np.testing.assert_allclose(back.c, b.c, atol=1e-13)


def test_derivative_and_partial_agree():
    lay = Layout.get(1, 1, ((2, 3),))
    X, Y = _vars(lay, (0.4, 0.6))
    f = X * X * Y * Y * Y
    d = f.diff(1)
    for e in itertools.product(range(3), range(3)):
        if lay.allows(e[0], e[1] + 1) and d.layout.allows(*e):
            assert d.partial(e) == pytest.approx(f.partial((e[0], e[1] + 1)))
    assert f.partial((2, 3)) == pytest.approx(2 * math.factorial(3))


def test_domain_errors():
    lay = Layout.get(1, 1, ((1, 1),))
    X, _ = _vars(lay, (-1.0, 0.0))
    with pytest.raises(JetDomainError):
        jets.sqrt(X)
    with pytest.raises(JetDomainError):
        jets.log(X)
    zero = Jet.constant(lay, 0.0) + 0 * X
    with pytest.raises(JetDomainError):
        jets.power(zero, -1)

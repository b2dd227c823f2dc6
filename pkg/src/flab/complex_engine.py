"""Complex-side objects: Levi matrix, Chern-Finsler connection, holomorphic curvature.

All complex derivatives are Wirtinger combinations of real jet partials:
d/dv^a = (d/dy^a - i d/dy^(a+n)) / 2 and d/dvbar^a = (d/dy^a + i d/dy^(a+n)) / 2,
and likewise for z, zbar in the x-variables.

Index conventions: ``L[b, t]`` is G_{b tbar}; ``Ginv[t, a]`` is G^{tbar a};
``N[a, m]`` is Gamma^a_{;m}; ``Gam[a, b, m]`` is Gamma^a_{b;m}; ``C[a, b, c]``
is C^a_{bc}; ``Rc[s, a, m, nu]`` is R^s_{a;m nubar}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .jets import Jet
from .partials import metric_jet
from .report import H_NORMALIZATION, to_jsonable

__all__ = [
    "NotStronglyPseudoconvex",
    "ComplexTensorSet",
    "levi_metric",
    "cf_connection",
    "complex_tensors",
    "complex_spray",
    "holomorphic_curvature",
    "kahler_residuals",
    "H_NORMALIZATION",
]

EIG_FLOOR = 1e-12
CONNECTION_CORNERS = ((1, 3), (0, 4))
CURVATURE_CORNERS = ((2, 4),)
SPRAY_CORNERS = ((1, 1), (0, 2))


class NotStronglyPseudoconvex(ArithmeticError):
    """The Levi matrix G_{a bbar} is not positive definite at the point."""


def _wirt(jet, var, n, bar):
    """Wirtinger derivative wrt complex coordinate built from real vars var, var+n."""
    a = jet.diff(var)
    b = jet.diff(var + n)
    return 0.5 * (a + 1j * b) if bar else 0.5 * (a - 1j * b)


def dv(jet, a, n):
    return _wirt(jet, 2 * n + a, n, False)


def dvb(jet, a, n):
    return _wirt(jet, 2 * n + a, n, True)


def dz(jet, m, n):
    return _wirt(jet, m, n, False)


def dzb(jet, m, n):
    return _wirt(jet, m, n, True)


def _grid(fn, n, depth=2):
    if depth == 1:
        return jets.stack([fn(a) for a in range(n)], -1)
    return jets.stack([_grid(lambda b, a=a: fn(a, b), n, depth - 1) for a in range(n)],
                      -depth)


def _check_levi(L):
    eig = np.linalg.eigvalsh(L)
    lo = eig[..., 0]
    if np.any(lo <= EIG_FLOOR):
        raise NotStronglyPseudoconvex(f"min eigenvalue of the Levi matrix is {float(np.min(lo)):.3g}")
    return lo


def _levi_jet(gjet, n):
    gv = [dv(gjet, a, n) for a in range(n)]
    return _grid(lambda b, t: dvb(gv[b], t, n), n)


def _nonlinear_jet(gjet, L, n):
    """Gamma^a_{;m} = G^{tbar a} G_{tbar;m} as a jet, N[a, m]."""
    gvb = [dvb(gjet, t, n) for t in range(n)]
    rhs = _grid(lambda t, m: dz(gvb[t], m, n), n)
    LT = Jet(L.layout, np.swapaxes(L.c, -1, -2))
    return jets.solve(LT, rhs)


def levi_metric(table):
    """Levi matrix L[b, t] = G_{b tbar} and inverse Ginv[t, a] = G^{tbar a}.

    Returns ``(L, Ginv, min_eig)``.
    """
    n = table.spec.n
    L = _levi_jet(table.jet, n).c[0]
    lo = _check_levi(L)
    return L, np.linalg.inv(L), lo


@dataclass
class ComplexTensorSet:
    """Complex-side tensors at one point or a batch (see module docstring)."""

    z: np.ndarray
    v: np.ndarray
    G: np.ndarray
    L: np.ndarray
    Ginv: np.ndarray
    N: np.ndarray
    spray: np.ndarray
    Gam: np.ndarray
    C: np.ndarray
    Rc: np.ndarray | None = None
    R_contracted: np.ndarray | None = None
    H: np.ndarray | None = None
    H_simple: np.ndarray | None = None
    min_eig: np.ndarray | None = None

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["normalization"] = H_NORMALIZATION
        d["index_order"] = {
            "L": "G_{b tbar} as L[b,t]", "Ginv": "G^{tbar a} as Ginv[t,a]",
            "N": "Gamma^a_{;m} as N[a,m]", "spray": "complex spray G^a",
            "Gam": "Gamma^a_{b;m} as Gam[a,b,m]", "C": "C^a_{bc} as C[a,b,c]",
            "Rc": "R^s_{a;m nubar} as Rc[s,a,m,nu]",
        }
        return to_jsonable(d)


def _contract_vectors(spec, x, y):
    n = spec.n
    v = y[..., :n] + 1j * y[..., n:]
    z = x[..., :n] + 1j * x[..., n:]
    return z, v


def complex_tensors(spec, x, y, curvature=True):
    """ComplexTensorSet at real coordinates (x, y), batched.

    With ``curvature`` the G jet carries (x, y)-orders (2, 4) and the
    curvature contraction and H(v) are filled in; otherwise (1, 3) suffices.
    """
    n = spec.n
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z, v = _contract_vectors(spec, x, y)
    gj = metric_jet(spec, x, y, CURVATURE_CORNERS if curvature else CONNECTION_CORNERS)
    Lj = _levi_jet(gj, n)
    lo = _check_levi(Lj.c[0])
    Nj = _nonlinear_jet(gj, Lj, n)
    L0 = Lj.c[0]
    N0 = Nj.c[0]
    Ginv = np.linalg.inv(L0)
    # delta_m L[b,t] = dz_m L[b,t] - N[g,m] dv_g L[b,t]
    dvL = [dv(Lj, g, n) for g in range(n)]
    dzL = [dz(Lj, m, n) for m in range(n)]
    dvL_stack = jets.stack(dvL, -1)  # [b, t, g]
    deltaL = []
    for m in range(n):
        corr = jets.einsum("...btg,...g->...bt", dvL_stack, Nj[..., :, m])
        deltaL.append(dzL[m] - corr)
    deltaL = jets.stack(deltaL, -1)  # [b, t, m]
    # Gam[a,b,m] = Ginv[t,a] deltaL[b,t,m]: solve L^T X = deltaL arranged [t, (b,m)]
    LT = Jet(Lj.layout, np.swapaxes(Lj.c, -1, -2))
    rhs = Jet(deltaL.layout, np.moveaxis(deltaL.c, -2, -3))  # [t, b, m]
    shp = rhs.shape
    rhs2 = rhs.reshape(*shp[:-2], shp[-2] * shp[-1])
    Gamj = jets.solve(LT, rhs2).reshape(*shp)
    Gam0 = Gamj.c[0]
    C = np.einsum("...ta,...btg->...abg", Ginv, dvL_stack.c[0])
    spr = 0.5 * np.einsum("...am,...m->...a", N0, v)
    G0 = gj.c[0]
    out = ComplexTensorSet(z=z, v=v, G=G0, L=L0, Ginv=Ginv, N=N0, spray=spr,
                           Gam=Gam0, C=C, min_eig=lo)
    if not curvature:
        return out
    # delta_nubar X = dzbar_nu X - conj(N[g,nu]) dvbar_g X, evaluated at the point
    Nc = np.conj(N0)

    def delta_bar(jet):
        dzbs = np.stack([dzb(jet, nu, n).c[0] for nu in range(n)], -1)
        dvbs = np.stack([dvb(jet, g, n).c[0] for g in range(n)], -1)
        return dzbs - _contract_last(dvbs, Nc)

    dGam = delta_bar(Gamj)  # [a, b, m, nu]
    dN = delta_bar(Nj)  # [g, m, nu]
    Rc = -dGam - np.einsum("...abg,...gmn->...abmn", C, dN)
    Rlow = np.einsum("...sb,...samn->...abmn", L0, Rc)  # R_{a bbar; m nubar}
    vb = np.conj(v)
    Rcon = np.einsum("...abmn,...a,...b,...m,...n->...", Rlow, v, vb, v, vb)
    H = 2.0 * Rcon / G0**2
    Gv = np.stack([dv(gj, s, n).c[0] for s in range(n)], -1)
    Hs = -2.0 / G0**2 * np.einsum("...s,...m,...n,...smn->...", Gv, v, vb, dN)
    out.Rc = Rc
    out.R_contracted = Rcon
    out.H = H
    out.H_simple = Hs
    return out


def _contract_last(dvbs, Nc):
    """sum_g dvbs[..., g] * Nc[..., g, nu] -> [..., nu], batch-aware."""
    # dvbs: batch + tensor + (g,), Nc: batch + (g, nu)
    rank = dvbs.ndim - Nc.ndim + 1  # tensor rank of the differentiated object
    nb = Nc.ndim - 2
    Ncb = Nc.reshape(Nc.shape[:nb] + (1,) * rank + Nc.shape[nb:])
    return np.sum(dvbs[..., :, None] * Ncb, axis=-2)


def cf_connection(spec, p):
    """(Gamma^a_{;b}, complex spray, Gamma^a_{b;m}, C^a_{bc}) at an EvalPoint."""
    t = complex_tensors(spec, p.x, p.y, curvature=False)
    return t.N, t.spray, t.Gam, t.C


def complex_spray(spec, x, y):
    """Complex spray G^a = 1/2 Gamma^a_{;b} v^b, batched (cheap jet orders)."""
    n = spec.n
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gj = metric_jet(spec, x, y, SPRAY_CORNERS)
    Lj = _levi_jet(gj, n)
    _check_levi(Lj.c[0])
    N0 = _nonlinear_jet(gj, Lj, n).c[0]
    v = y[..., :n] + 1j * y[..., n:]
    return 0.5 * np.einsum("...am,...m->...a", N0, v)


def holomorphic_curvature(spec, p):
    """H(v) = (2/G^2) R_{a bbar; m nubar} v^a vbar^b v^m vbar^nu (real part).

    Normalized so that Fubini-Study has H = 4; the imaginary part is checked
    to be roundoff.
    """
    t = complex_tensors(spec, p.x, p.y, curvature=True)
    H = t.H
    if np.any(np.abs(H.imag) > 1e-9 * np.maximum(1.0, np.abs(H.real))):
        raise ArithmeticError(f"holomorphic curvature has imaginary part {np.max(np.abs(H.imag)):.3g}")
    return H.real


def kahler_residuals(spec, p, tensors=None):
    """(strong, weak) Kahler residuals.

    strong = max |Gamma^a_{b;m} - Gamma^a_{m;b}|;
    weak = max_b |G_a (Gamma^a_{b;m} - Gamma^a_{m;b}) v^m|.
    """
    t = tensors if tensors is not None else complex_tensors(spec, p.x, p.y, curvature=False)
    return _kahler_from(spec, p.x, p.y, t)


def _kahler_from(spec, x, y, t):
    n = spec.n
    T = t.Gam - np.swapaxes(t.Gam, -1, -2)
    strong = np.max(np.abs(T).reshape(T.shape[:-3] + (-1,)), axis=-1)
    gj = metric_jet(spec, x, y, ((0, 1),))
    Ga = np.stack([dv(gj, a, n).c[0] for a in range(n)], -1)
    w = np.einsum("...a,...abm,...m->...b", Ga, T, t.v)
    weak = np.max(np.abs(w), axis=-1)
    return strong, weak

"""Real Finsler tensors of G = F^2: fundamental tensor through Ricci and S-curvature.

Everything is batched over leading axes of ``x`` and ``y``.  The spray is
built as a jet in (x, y), so its y-derivatives (connection coefficients,
Berwald curvature) and horizontal derivatives (Riemann curvature) come from
the same exact jet rather than from re-derived closed forms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import jets
from .jets import Jet
from .partials import EvalPoint, derivative_tensor, metric_jet

__all__ = [
    "NotStronglyConvex",
    "DegenerateFlag",
    "RealTensorSet",
    "fundamental_tensor",
    "spray_and_connection",
    "spray_jet",
    "spray",
    "spray_with_connection",
    "jacobi_operator",
    "contracted_riemann",
    "real_tensors",
    "riemann_curvature",
    "flag_curvature",
    "ricci",
    "ricci_frame",
    "s_curvature",
    "SphereRule",
    "sphere_rule",
    "busemann_hausdorff_density",
    "riemannian_det_density",
    "SPRAY_CORNERS",
    "CONNECTION_CORNERS",
    "JACOBI_CORNERS",
    "FULL_CORNERS",
]

log = logging.getLogger(__name__)

# Minimal G-jet corners for each downstream need: the spray loses one x-order
# and two y-orders relative to G.
SPRAY_CORNERS = ((1, 1), (0, 2))
CONNECTION_CORNERS = ((1, 2), (0, 3))
JACOBI_CORNERS = ((2, 2), (1, 3), (0, 4))
FULL_CORNERS = ((2, 5),)

EIG_FLOOR = 1e-12
COND_WARN = 1e8


class NotStronglyConvex(ArithmeticError):
    """The fundamental tensor g_ij is not positive definite at the point."""


class DegenerateFlag(ArithmeticError):
    """Flag (y, V) is degenerate: V is (nearly) parallel to y."""


def _check_convex(g):
    eig = np.linalg.eigvalsh(g)
    lo = eig[..., 0]
    if np.any(lo <= EIG_FLOOR):
        raise NotStronglyConvex(f"min eigenvalue of g_ij is {float(np.min(lo)):.3g}")
    cond = eig[..., -1] / lo
    if np.any(cond > COND_WARN):
        log.warning("fundamental tensor condition number %.3g exceeds %.0e",
                    float(np.max(cond)), COND_WARN)
    return lo, cond


def fundamental_tensor(table):
    """g_ij = 1/2 d^2 G / dy^i dy^j and its inverse from a JetTable.

    Returns
    -------
    g, ginv : ndarray
    min_eig : ndarray
        Smallest eigenvalue of g (the strong-convexity margin).
    """
    g = 0.5 * table.tensor(2)
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    lo, _ = _check_convex(g)
    return g, np.linalg.inv(g), lo


def _transpose(jet):
    return Jet(jet.layout, np.swapaxes(jet.c, -1, -2))


def spray_jet(gjet, y):
    """Spray Ghat^i = 1/4 g^il (G_{l;k} y^k - G_{;l}) as a jet in (x, y).

    ``gjet`` is the real jet of G; ``y`` the expansion point of the
    y-variables.  The result is valid to (X-1, Y-2) for a G jet with corner
    (X, Y).
    """
    lay = gjet.layout
    dim = lay.nx
    gy = [gjet.diff(dim + l) for l in range(dim)]
    g = jets.stack([jets.stack([0.5 * gy[i].diff(dim + j) for j in range(dim)], -1)
                    for i in range(dim)], -2)
    _check_convex(g.c[0])
    gxy = jets.stack([jets.stack([gy[l].diff(k) for k in range(dim)], -1)
                      for l in range(dim)], -2)
    gx = jets.stack([gjet.diff(l) for l in range(dim)], -1)
    yv = jets.stack([Jet.variable(lay, dim + k, y[..., k]) for k in range(dim)], -1)
    rhs = jets.einsum("...lk,...k->...l", gxy, yv) - gx
    return 0.25 * jets.solve(g, rhs)


def spray_and_connection(table):
    """Ghat^i, Ghat^i_j, Ghat^i_jk and Berwald curvature B^i_jkl from a JetTable.

    The table needs y-order 5 and x-order 1 for B; lower orders give the
    lower tensors only (missing ones are returned as ``None``).
    """
    if table.max_x < 1 or table.max_y < 2:
        raise ValueError("spray needs a JetTable with orders (y >= 2, x >= 1)")
    sj = spray_jet(table.jet, table.point.y)
    out = [sj.c[0]]
    for k in (1, 2, 3):
        out.append(derivative_tensor(sj, k) if table.max_y >= 2 + k else None)
    return tuple(out)


def spray(spec, x, y):
    """Spray coefficients Ghat^i(x, y), batched."""
    gj = metric_jet(spec, x, y, SPRAY_CORNERS)
    return spray_jet(gj, np.asarray(y, dtype=float)).c[0]


def spray_with_connection(spec, x, y):
    """(Ghat^i, Ghat^i_j, g_ij) at (x, y), batched; used for transport."""
    y = np.asarray(y, dtype=float)
    gj = metric_jet(spec, x, y, CONNECTION_CORNERS)
    sj = spray_jet(gj, y)
    g = 0.5 * derivative_tensor(gj, 2)
    return sj.c[0], derivative_tensor(sj, 1), g


def _contracted_riemann(sj, y):
    """R^i_k = 2 d_k Gh^i - y^l d_l dy_k Gh^i + 2 Gh^m Gh^i_km - Gh^s_k Gh^i_s."""
    gh = sj.c[0]
    n1 = derivative_tensor(sj, 1)
    n2 = derivative_tensor(sj, 2)
    dx = derivative_tensor(sj, 0, 1)
    dxy = derivative_tensor(sj, 1, 1)
    return (2.0 * dx
            - np.einsum("...l,...ikl->...ik", y, dxy)
            + 2.0 * np.einsum("...m,...ikm->...ik", gh, n2)
            - np.einsum("...sk,...is->...ik", n1, n1))


def jacobi_operator(spec, x, y):
    """(R^i_k, g_ij, Ghat^i_j) at (x, y), batched: the Jacobi-field data."""
    y = np.asarray(y, dtype=float)
    gj = metric_jet(spec, x, y, JACOBI_CORNERS)
    sj = spray_jet(gj, y)
    return _contracted_riemann(sj, y), 0.5 * derivative_tensor(gj, 2), derivative_tensor(sj, 1)


@dataclass
class RealTensorSet:
    """Real-side tensors at one point (or a batch along leading axes).

    Index order follows the upper/lower pattern of each name: ``N[i, j]`` is
    Ghat^i_j, ``Gamma[i, j, k]`` is Ghat^i_jk, ``B[i, j, k, l]`` is B^i_jkl,
    ``R[i, j, k, l]`` is R^i_jkl and ``Rik[i, k]`` is R_ik.
    """

    x: np.ndarray
    y: np.ndarray
    G: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    C: np.ndarray
    spray: np.ndarray
    N: np.ndarray
    Gamma: np.ndarray
    B: np.ndarray
    R: np.ndarray
    Rik: np.ndarray
    Rk: np.ndarray
    min_eig: np.ndarray

    @property
    def dim(self):
        return self.x.shape[-1]

    def to_dict(self):
        return {
            "index_order": {
                "g": "g[i,j]", "ginv": "g^[i,j]", "C": "C[i,j,k]",
                "spray": "Ghat^[i]", "N": "Ghat^i_j as N[i,j]",
                "Gamma": "Ghat^i_jk as Gamma[i,j,k]", "B": "B^i_jkl as B[i,j,k,l]",
                "R": "R^i_jkl as R[i,j,k,l]", "Rik": "R_ik as Rik[i,k]",
            },
            **{k: np.asarray(getattr(self, k)).tolist() for k in (
                "x", "y", "G", "g", "ginv", "C", "spray", "N", "Gamma", "B", "R",
                "Rik", "min_eig")},
        }


def real_tensors(spec, x, y):
    """Full RealTensorSet at (x, y), batched over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gj = metric_jet(spec, x, y, FULL_CORNERS)
    g = 0.5 * derivative_tensor(gj, 2)
    lo, _ = _check_convex(g)
    ginv = np.linalg.inv(g)
    C = 0.25 * derivative_tensor(gj, 3)
    sj = spray_jet(gj, y)
    n1 = derivative_tensor(sj, 1)
    n2 = derivative_tensor(sj, 2)
    n3 = derivative_tensor(sj, 3)
    # delta_k Gamma^i_jl = d_xk Gamma^i_jl - N^m_k d_ym Gamma^i_jl
    dgam = derivative_tensor(sj, 2, 1) - np.einsum("...mk,...ijlm->...ijlk", n1, n3)
    quad = np.einsum("...iks,...sjl->...ijkl", n2, n2)
    R = np.swapaxes(dgam, -1, -2) - dgam + quad - np.swapaxes(quad, -1, -2)
    Rk = np.einsum("...ijkl,...j,...l->...ik", R, y, y)
    Rik = np.einsum("...si,...sk->...ik", g, Rk)
    return RealTensorSet(x=x, y=y, G=gj.c[0], g=g, ginv=ginv, C=C, spray=sj.c[0],
                         N=n1, Gamma=n2, B=n3, R=R, Rik=Rik, Rk=Rk, min_eig=lo)


def riemann_curvature(spec, p):
    """R^i_jkl and R_ik at an :class:`EvalPoint` (via the full tensor set)."""
    t = real_tensors(spec, p.x, p.y)
    return t.R, t.Rik


def contracted_riemann(spec, x, y):
    """R^i_k from the contracted formula (independent of the full R^i_jkl)."""
    return jacobi_operator(spec, x, y)[0]


def _flag_denominator(g, y, V):
    gyy = np.einsum("...i,...ij,...j->...", y, g, y)
    gvv = np.einsum("...i,...ij,...j->...", V, g, V)
    gyv = np.einsum("...i,...ij,...j->...", y, g, V)
    return gyy * gvv - gyv**2, gyy * gvv


def flag_curvature(tensors, V):
    """K(y, V) = R_ik V^i V^k / (g(y,y) g(V,V) - g(y,V)^2).

    Raises
    ------
    DegenerateFlag
        If the normalized denominator falls below 1e-12.
    """
    V = np.asarray(V, dtype=float)
    den, scale = _flag_denominator(tensors.g, tensors.y, V)
    if np.any(den <= 1e-12 * scale):
        raise DegenerateFlag("V is (nearly) parallel to y")
    return np.einsum("...i,...ik,...k->...", V, tensors.Rik, V) / den


def ricci(tensors):
    """Ric(y) = g^ik R_ik / G(y)."""
    return np.einsum("...ik,...ik->...", tensors.ginv, tensors.Rik) / tensors.G


def ricci_frame(tensors):
    """Ric(y) as the sum of flag curvatures over a g_y-orthonormal frame of y-perp."""
    from .bridge import orthonormal_frame

    E = orthonormal_frame(tensors.g, tensors.y)
    # the last column is y/F; the others span y-perp
    return sum(flag_curvature(tensors, E[..., :, a]) for a in range(tensors.dim - 1))


# ---------------------------------------------------------------------------
# S-curvature

@dataclass(frozen=True)
class SphereRule:
    """Quadrature on the unit sphere of C^n for circle-invariant integrands.

    ``points`` are real 2n-vectors and ``weights`` sum to one, so that
    ``rule.mean(f(points))`` approximates the uniform average of f.
    """

    points: np.ndarray
    weights: np.ndarray

    def mean(self, values):
        """Weighted average over the last axis (the point axis)."""
        return values @ self.weights


_RULES = {}


def _J(n):
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, -I], [I, Z]])


def default_level(n):
    """Rule level used when none is given: fine for n <= 2, coarser above."""
    return 16 if n <= 2 else 6


def sphere_rule(n, level=None):
    """Product rule on S^(2n-1) exploiting f(e^(i theta) v) = f(v).

    Writes v_k = r_k e^(i xi_k) with r on the positive orthant of S^(n-1) in
    hyperspherical angles and fixes xi_n = 0.  The surface measure is
    prod r_k dS(r) dxi.  Each polar angle gets ``level`` Gauss-Legendre
    nodes and each phase 2*level trapezoid nodes, which is spectrally
    accurate for smooth integrands.  For n = 1 a single point is exact.
    """
    level = default_level(n) if level is None else level
    key = (n, level)
    if key in _RULES:
        return _RULES[key]
    if n == 1:
        rule = SphereRule(np.array([[1.0, 0.0]]), np.array([1.0]))
        _RULES[key] = rule
        return rule
    gx, gw = np.polynomial.legendre.leggauss(level)
    M = 2 * level
    axes = [np.arange(level)] * (n - 1) + [np.arange(M)] * (n - 1)
    idx = [g.ravel() for g in np.meshgrid(*axes, indexing="ij")]
    ang = [0.25 * np.pi * (gx[i] + 1.0) for i in idx[: n - 1]]
    w = np.prod([gw[i] for i in idx[: n - 1]], axis=0)
    r = []
    sin_prod = np.ones_like(ang[0])
    for k in range(n - 1):
        r.append(sin_prod * np.cos(ang[k]))
        sin_prod = sin_prod * np.sin(ang[k])
    r.append(sin_prod)
    r = np.stack(r, -1)
    w = w * np.prod(r, axis=-1)
    for k in range(n - 1):
        w = w * np.sin(ang[k]) ** (n - 2 - k)
    phase = np.stack([2.0 * np.pi * i / M for i in idx[n - 1:]] + [np.zeros_like(ang[0])], -1)
    v = r * np.exp(1j * phase)
    rule = SphereRule(np.concatenate([v.real, v.imag], -1), w / w.sum())
    _RULES[key] = rule
    return rule


def _on_rule(spec, x, rule, corners):
    W = rule.points
    x = np.asarray(x, dtype=float)
    xs = np.broadcast_to(x[..., None, :], x.shape[:-1] + W.shape)
    return metric_jet(spec, xs, np.broadcast_to(W, xs.shape), corners)


def busemann_hausdorff_density(spec, x, rule=None, grad=False):
    """Busemann-Hausdorff density sigma(x) = vol(unit ball) / vol{F(x, .) < 1}.

    The indicatrix volume is (1/2n) times the sphere integral of G^(-n),
    evaluated with a :class:`SphereRule` as a ratio against the quadratic
    form Q = w g0 w (g0 the rule average of g(x, w)), whose sphere integral
    is known in closed form.  This keeps the density exact for Riemannian
    metrics whatever the rule.  Batched over leading axes of ``x``; with
    ``grad`` also returns the gradient of ln sigma.
    """
    n = spec.n
    rule = rule or sphere_rule(n)
    W, wt = rule.points, rule.weights
    gj = _on_rule(spec, x, rule, ((1, 2),) if grad else ((0, 2),))
    G = gj.c[0]
    J = _J(n)
    g0 = np.einsum("d,...dij->...ij", wt, 0.5 * derivative_tensor(gj, 2))
    # the rule fixes one phase, so restore J-invariance of the reference form
    g0 = 0.5 * (g0 + np.einsum("ip,...ij,jq->...pq", J, g0, J))
    Q = np.einsum("di,...ij,dj->...d", W, g0, W)
    a = rule.mean(Q ** (-float(n)))
    b = rule.mean(G ** (-float(n)))
    sigma = np.sqrt(np.linalg.det(g0)) * a / b
    if not grad:
        return sigma
    dg0 = np.einsum("d,...dijm->...ijm", wt, 0.5 * derivative_tensor(gj, 2, 1))
    dg0 = 0.5 * (dg0 + np.einsum("ip,...ijm,jq->...pqm", J, dg0, J))
    dQ = np.einsum("di,...ijm,dj->...dm", W, dg0, W)
    dG = derivative_tensor(gj, 0, 1)
    dlog = (0.5 * np.einsum("...ij,...jim->...m", np.linalg.inv(g0), dg0)
            - n * np.einsum("d,...d,...dm->...m", wt, Q ** (-n - 1.0), dQ) / a[..., None]
            + n * np.einsum("d,...d,...dm->...m", wt, G ** (-n - 1.0), dG) / b[..., None])
    return sigma, dlog


def riemannian_det_density(spec, x, rule=None, grad=False):
    """Rule average of sqrt(det g(x, w)) over unit directions w, batched over x.

    With ``grad`` also returns the gradient of ln sigma.
    """
    rule = rule or sphere_rule(spec.n)
    gj = _on_rule(spec, x, rule, ((1, 2),) if grad else ((0, 2),))
    g = 0.5 * derivative_tensor(gj, 2)
    sq = np.sqrt(np.linalg.det(g))
    sigma = rule.mean(sq)
    if not grad:
        return sigma
    dlogdet = np.einsum("...ij,...jim->...m", np.linalg.inv(g), 0.5 * derivative_tensor(gj, 2, 1))
    dlog = np.einsum("d,...d,...dm->...m", rule.weights, sq, 0.5 * dlogdet) / sigma[..., None]
    return sigma, dlog


def _dlog_sigma(spec, x, measure, rule):
    """Gradient of ln sigma(x) for the chosen measure."""
    dim = spec.dim
    if callable(measure):
        h = 1e-4
        grad = np.zeros(dim)
        s0 = float(measure(x))
        if not s0 > 0:
            raise ValueError("measure density must be positive")
        for m in range(dim):
            e = np.zeros(dim)
            e[m] = h
            vals = [float(measure(x + k * e)) for k in (-2, -1, 1, 2)]
            if min(vals) <= 0:
                raise ValueError("measure density must be positive")
            lv = np.log(vals)
            grad[m] = (lv[0] - 8 * lv[1] + 8 * lv[2] - lv[3]) / (12 * h)
        return grad
    if measure == "riemannian_det":
        return riemannian_det_density(spec, x, rule, grad=True)[1]
    if measure == "busemann_hausdorff":
        return busemann_hausdorff_density(spec, x, rule, grad=True)[1]
    raise ValueError(f"unknown measure {measure!r}")


def s_curvature(spec, p, measure="busemann_hausdorff", rule=None):
    """S(y) = d/dt tau(gamma, gamma') with tau = ln(sqrt(det g_y) / sigma(x)).

    Parameters
    ----------
    measure : {"busemann_hausdorff", "riemannian_det"} or callable
        ``riemannian_det`` uses sigma(x) = mean over unit directions w of
        sqrt(det g(x, w)), which is the canonical density for Riemannian
        metrics.  A callable is an explicit positive density sigma(x).
    rule : SphereRule, optional
        Direction quadrature for the built-in densities.
    """
    rule = rule or sphere_rule(spec.n)
    x, y = p.x, p.y
    gj = metric_jet(spec, x, y, ((1, 3),))
    g = 0.5 * derivative_tensor(gj, 2)
    _check_convex(g)
    ginv = np.linalg.inv(g)
    dgx = 0.5 * derivative_tensor(gj, 2, 1)
    dgy = 0.5 * derivative_tensor(gj, 3)
    sj = spray_jet(metric_jet(spec, x, y, SPRAY_CORNERS), y)
    gh = sj.c[0]
    tau_x = 0.5 * np.einsum("ij,jim->m", ginv, dgx) - _dlog_sigma(spec, x, measure, rule)
    tau_y = 0.5 * np.einsum("ij,jim->m", ginv, dgy)
    return float(y @ tau_x - 2.0 * gh @ tau_y)


def tensors_at(spec, p: EvalPoint):
    return real_tensors(spec, p.x, p.y)

"""Real/complex dictionary and the identities relating the two engines.

J acts on real 2n-vectors as multiplication by i on v = y[:n] + i y[n:],
i.e. J e_k = e_(k+n) and J e_(k+n) = -e_k for k < n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .complex_engine import complex_spray
from .dsl import evaluate, parse_metric
from .jets import Jet, Layout
from .metric import to_complex, to_real
from .real_engine import flag_curvature, real_tensors, ricci, spray_jet
from .partials import derivative_tensor, metric_jet

__all__ = [
    "J_matrix",
    "apply_J",
    "to_complex",
    "to_real",
    "HomogeneitySubject",
    "homogeneity_check",
    "j_invariance_check",
    "spray_correspondence",
    "parallelism_residual",
    "orthogonal_ricci",
    "orthonormal_frame",
    "DegenerateDimension",
]

PIVOT_FLOOR = 1e-8


class DegenerateDimension(ValueError):
    """Quantity is identically zero in complex dimension one."""


def J_matrix(n):
    """Matrix J^i_k of the complex structure on R^(2n)."""
    J = np.zeros((2 * n, 2 * n))
    J[n:, :n] = np.eye(n)
    J[:n, n:] = -np.eye(n)
    return J


def apply_J(y):
    y = np.asarray(y, dtype=float)
    n = y.shape[-1] // 2
    return np.concatenate([-y[..., n:], y[..., :n]], axis=-1)


# ---------------------------------------------------------------------------
# Homogeneity equivalences


@dataclass(frozen=True)
class HomogeneitySubject:
    """A complex function H(v) of the fiber variables with declared bidegree (p, q).

    ``expr`` is a DSL expression in v1..vn (z-variables are allowed and held
    fixed at the evaluation point).
    """

    expr: object
    n: int
    p: float
    q: float

    @classmethod
    def from_text(cls, text, n, p, q):
        return cls(parse_metric(text), n, p, q)

    def value(self, x, y):
        z = to_complex(x)
        v = to_complex(y)
        return np.asarray(evaluate(self.expr, [z[..., k] for k in range(self.n)],
                                   [v[..., k] for k in range(self.n)]), dtype=complex)

    def declared_residual(self, x, y, zeta):
        """|H(zeta v) - zeta^p conj(zeta)^q H(v)| / max(1, |H(v)|)."""
        h0 = self.value(x, y)
        v = to_complex(y) * zeta
        h1 = self.value(x, to_real(v))
        ph = np.abs(zeta) ** (self.p + self.q) * np.exp(1j * np.angle(zeta) * (self.p - self.q))
        return np.abs(h1 - ph * h0) / np.maximum(1.0, np.abs(h0))


def homogeneity_check(subject, p):
    """Residuals of the equivalent forms of (p, q)-homogeneity at an EvalPoint.

    Returns a dict with the four real forms (R_k y^k = (p+q)R, I_k y^k =
    (p+q)I, R_k u^k = (q-p)I, I_k u^k = (p-q)R with u = Jy) and the two
    Wirtinger forms (H_a v^a = pH, H_abar vbar^a = qH), each scaled by
    max(1, |H|).
    """
    n = subject.n
    dim = 2 * n
    x = np.asarray(p.x, dtype=float)
    y = np.asarray(p.y, dtype=float)
    lay = Layout.get(dim, dim, ((0, 1),))
    z = to_complex(x)
    zs, vs = [], []
    for a in range(n):
        zs.append(Jet.constant(lay, np.asarray(z[..., a], dtype=complex)))
        cv = np.zeros((lay.size,) + y.shape[:-1], dtype=complex)
        cv[0] = y[..., a] + 1j * y[..., a + n]
        cv[lay.unit(dim + a)] = 1.0
        cv[lay.unit(dim + n + a)] = 1j
        vs.append(Jet(lay, cv))
    hj = evaluate(subject.expr, zs, vs)
    if not isinstance(hj, Jet):
        hj = Jet.constant(lay, np.asarray(hj, dtype=complex))
    H = hj.c[0]
    grad = derivative_tensor(hj, 1)  # complex: dR + i dI
    dR, dI = grad.real, grad.imag
    R, I = H.real, H.imag
    u = apply_J(y)
    pp, qq = subject.p, subject.q
    scale = np.maximum(1.0, np.abs(H))
    vv = to_complex(y)
    Ha = 0.5 * (grad[..., :n] - 1j * grad[..., n:])
    Hab = 0.5 * (grad[..., :n] + 1j * grad[..., n:])

    def dot(a, b):
        return np.einsum("...k,...k->...", a, b)

    return {
        "R_y": np.abs(dot(dR, y) - (pp + qq) * R) / scale,
        "I_y": np.abs(dot(dI, y) - (pp + qq) * I) / scale,
        "R_u": np.abs(dot(dR, u) - (qq - pp) * I) / scale,
        "I_u": np.abs(dot(dI, u) - (pp - qq) * R) / scale,
        "H_v": np.abs(dot(Ha, vv) - pp * H) / scale,
        "H_vbar": np.abs(dot(Hab, np.conj(vv)) - qq * H) / scale,
    }


# ---------------------------------------------------------------------------
# J-invariance


def j_invariance_check(tensors, X):
    """Residuals (a)-(e) of J-invariance of the fundamental tensor.

    (a) |g_y(Jy, JX) - g_y(y, X)|, (b) |g_y(y, Jy)|, (c) |g_y(y,y) - g_y(Jy,Jy)|
    hold for every strongly convex complex Finsler metric; (d) the full
    invariance max|g_ij J^i_p J^j_q - g_pq| and (e) the Cartan analogue are
    diagnostics of the Hermitian case.  (a)-(c) are relative to g_y(y, y).
    """
    g, y = tensors.g, tensors.y
    X = np.asarray(X, dtype=float)
    n = y.shape[-1] // 2
    J = J_matrix(n)
    Jy = apply_J(y)
    JX = apply_J(X)

    def ip(a, b):
        return np.einsum("...i,...ij,...j->...", a, g, b)

    scale = ip(y, y)
    xs = np.sqrt(ip(X, X) * scale)
    gJ = np.einsum("ip,...ij,jq->...pq", J, g, J)
    CJ = np.einsum("ip,...ijs,jq->...pqs", J, tensors.C, J)
    return {
        "a": np.abs(ip(Jy, JX) - ip(y, X)) / xs,
        "b": np.abs(ip(y, Jy)) / scale,
        "c": np.abs(ip(y, y) - ip(Jy, Jy)) / scale,
        "d": np.max(np.abs(gJ - g).reshape(g.shape[:-2] + (-1,)), axis=-1),
        "e": np.max(np.abs(CJ - tensors.C).reshape(g.shape[:-2] + (-1,)), axis=-1),
        "cartan": np.max(np.abs(tensors.C).reshape(g.shape[:-2] + (-1,)), axis=-1),
    }


# ---------------------------------------------------------------------------
# spray correspondence and parallelism of J


def spray_correspondence(spec, x, y):
    """max_b |G^b - (Ghat^b + i Ghat^(b+n))| between complex and real sprays."""
    from .real_engine import spray

    n = spec.n
    gr = spray(spec, x, y)
    gc = complex_spray(spec, x, y)
    return np.max(np.abs(gc - (gr[..., :n] + 1j * gr[..., n:])), axis=-1)


def parallelism_residual(spec, x, y):
    """(r0, r1, r2) for the parallelism of J along the spray.

    r0 = max|Ghat^i_k u^k - 2 J^i_k Ghat^k|,
    r1 = max|Ghat^i_sk u^k + Ghat^i_k J^k_s - 2 J^i_k Ghat^k_s|,
    r2 = |J^i_{k|l} y^k y^l| with the Berwald horizontal covariant derivative,
    computed from Ghat^i_ml y^l and Ghat^m_kl y^k y^l separately.
    All three are relative to max(1, |Ghat|) with y normalized to F(y) = 1.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = spec.n
    F = np.sqrt(spec.G(x, y))
    y = y / F[..., None]
    gj = metric_jet(spec, x, y, ((1, 4),))
    sj = spray_jet(gj, y)
    gh = sj.c[0]
    n1 = derivative_tensor(sj, 1)
    n2 = derivative_tensor(sj, 2)
    J = J_matrix(n)
    u = apply_J(y)
    r0 = np.einsum("...ik,...k->...i", n1, u) - 2.0 * np.einsum("ik,...k->...i", J, gh)
    r1 = (np.einsum("...isk,...k->...is", n2, u) + np.einsum("...ik,ks->...is", n1, J)
          - 2.0 * np.einsum("ik,...ks->...is", J, n1))
    a = np.einsum("...iml,...l,...m->...i", n2, y, u)
    b = np.einsum("im,...mkl,...k,...l->...i", J, n2, y, y)
    r2 = a - b
    scale = np.maximum(1.0, np.max(np.abs(gh), axis=-1))

    def mx(r):
        return np.max(np.abs(r).reshape(r.shape[: y.ndim - 1] + (-1,)), axis=-1) / scale

    return mx(r0), mx(r1), mx(r2)


# ---------------------------------------------------------------------------
# frames and orthogonal Ricci


def orthonormal_frame(g, y):
    """g-orthonormal frame with last column y/F and second-to-last Jy/F.

    The remaining columns come from Gram-Schmidt on coordinate axes in index
    order, skipping candidates whose residual g-norm falls below 1e-8.
    Works on a single point; batches are handled by iterating.
    """
    g = np.asarray(g, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim > 1:
        return np.stack([orthonormal_frame(gi, yi) for gi, yi in zip(g, y)])
    dim = y.shape[0]

    def ip(a, b):
        return a @ g @ b

    basis = []
    for cand in [y, apply_J(y)] + list(np.eye(dim)):
        w = cand.astype(float).copy()
        for _ in range(2):
            for e in basis:
                w = w - ip(e, w) * e
        nrm = np.sqrt(max(ip(w, w), 0.0))
        if nrm < PIVOT_FLOOR * max(1.0, np.sqrt(max(ip(cand, cand), 0.0))):
            continue
        basis.append(w / nrm)
        if len(basis) == dim:
            break
    T, V, rest = basis[0], basis[1], basis[2:]
    return np.column_stack(rest + [V, T])


def orthogonal_ricci(spec, x, y, tensors=None):
    """Ric_perp(y) = Ric(y) - K(y, Jy) and the frame sum over span{y, Jy}-perp.

    Returns ``(trace_value, frame_value)``.  Raises DegenerateDimension for n = 1,
    where Ric_perp vanishes identically.
    """
    if spec.n == 1:
        raise DegenerateDimension("orthogonal Ricci curvature is identically 0 for n = 1")
    t = tensors if tensors is not None else real_tensors(spec, x, y)
    Jy = apply_J(t.y)
    trace = ricci(t) - flag_curvature(t, Jy)
    E = orthonormal_frame(t.g, t.y)
    frame = sum(flag_curvature(t, E[..., :, a]) for a in range(t.dim - 2))
    return trace, frame

"""Exact mixed partial derivatives of G(x, y) via jet propagation through the AST.

Real coordinates follow z^a = x^a + i x^(a+n), v^a = y^a + i y^(a+n).  Jet
variables 0..2n-1 are the x's, 2n..4n-1 the y's.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import jets
from .dsl import evaluate
from .jets import Jet, Layout
from .metric import MetricError

__all__ = [
    "MAX_Y",
    "MAX_X",
    "EvalPoint",
    "PartialSpec",
    "JetTable",
    "metric_jet",
    "eval_partials",
    "derivative_tensor",
    "fd_partial",
    "fd_partials",
    "fd_crosscheck",
]

# derivative contract: y-order <= 5, x-order <= 2
MAX_Y = 5
MAX_X = 2


@dataclass(frozen=True)
class EvalPoint:
    """A point of the slit tangent bundle in real chart coordinates."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape[-1] != y.shape[-1] or x.shape[-1] % 2:
            raise MetricError("x and y must be real 2n-vectors of equal length")
        if np.any(np.linalg.norm(y, axis=-1) == 0):
            raise MetricError("tangent vector y must be nonzero")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_complex(cls, z, v):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        v = np.atleast_1d(np.asarray(v, dtype=complex))
        return cls(np.concatenate([z.real, z.imag], -1), np.concatenate([v.real, v.imag], -1))

    @property
    def dim(self):
        return self.x.shape[-1]


@dataclass(frozen=True)
class PartialSpec:
    """Multi-index of a mixed partial: per-coordinate orders in x and in y."""

    x: tuple
    y: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(int(a) for a in self.x))
        object.__setattr__(self, "y", tuple(int(a) for a in self.y))
        if len(self.x) != len(self.y):
            raise ValueError("x and y multi-indices must have equal length")
        if min(self.x + self.y, default=0) < 0:
            raise ValueError("negative derivative order")

    @classmethod
    def of(cls, dim, *names):
        """Canonical spec from variable names, e.g. ``PartialSpec.of(4, "y1", "x3")``."""
        x = [0] * dim
        y = [0] * dim
        for name in names:
            kind, idx = name[0], int(name[1:])
            if kind not in "xy" or not 1 <= idx <= dim:
                raise ValueError(f"bad variable {name!r}")
            (x if kind == "x" else y)[idx - 1] += 1
        return cls(tuple(x), tuple(y))

    @property
    def order_x(self):
        return sum(self.x)

    @property
    def order_y(self):
        return sum(self.y)

    @property
    def order(self):
        return self.order_x + self.order_y

    @property
    def exponents(self):
        return self.x + self.y


def _variables(spec, x, y, layout):
    n = spec.n
    z, v = [], []
    for a in range(n):
        cz = np.zeros((layout.size,) + x.shape[:-1], dtype=complex)
        cz[0] = x[..., a] + 1j * x[..., a + n]
        if layout.max_x >= 1:
            cz[layout.unit(a)] = 1.0
            cz[layout.unit(a + n)] = 1j
        z.append(Jet(layout, cz))
        cv = np.zeros((layout.size,) + y.shape[:-1], dtype=complex)
        cv[0] = y[..., a] + 1j * y[..., a + n]
        if layout.max_y >= 1:
            cv[layout.unit(2 * n + a)] = 1.0
            cv[layout.unit(3 * n + a)] = 1j
        v.append(Jet(layout, cv))
    return z, v


def metric_jet(spec, x, y, corners):
    """Real jet of G about (x, y), batched over leading axes of x and y.

    ``corners`` lists admissible (x-order, y-order) pairs, e.g. ``((2, 5),)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    spec.check_domain(x)
    if np.any(np.linalg.norm(y, axis=-1) == 0):
        raise MetricError("tangent vector y must be nonzero")
    dim = spec.dim
    layout = Layout.get(dim, dim, tuple(corners))
    z, v = _variables(spec, x, y, layout)
    try:
        with np.errstate(divide="raise", invalid="raise"):
            g = evaluate(spec.expr, z, v)
    except (FloatingPointError, ZeroDivisionError, jets.JetDomainError) as exc:
        raise MetricError(f"metric not smooth at the evaluation point: {exc}") from exc
    if not isinstance(g, Jet):
        g = Jet.constant(layout, np.broadcast_to(np.asarray(g, dtype=float), x.shape[:-1]))
    c = g.c
    if np.iscomplexobj(c):
        scale = np.maximum(1.0, np.abs(c[0]))
        if np.any(np.abs(c.imag) > 1e-9 * scale):
            raise MetricError("metric jet has a non-negligible imaginary part")
        c = c.real.copy()
    if np.any(c[0] <= 0):
        raise MetricError("G must be positive off the zero section")
    return Jet(g.layout, c)


@lru_cache(maxsize=None)
def _tensor_index(layout, dim, ky, kx):
    idx_shape = (dim,) * (ky + kx)
    rows = []
    for combo in itertools.product(range(dim), repeat=ky + kx):
        e = [0] * (2 * dim)
        for pos, c in enumerate(combo):
            e[c + (dim if pos < ky else 0)] += 1
        rows.append(e)
    rows = np.array(rows, dtype=np.int64).reshape(-1, 2 * dim)
    src = layout.lookup(rows)
    if np.any(src < 0):
        raise KeyError(f"orders (y={ky}, x={kx}) exceed {layout}")
    weight = layout.weight[src]
    return src, weight, idx_shape


def derivative_tensor(jet, ky, kx=0):
    """Dense array of all partials d^ky/dy.. d^kx/dx.. of ``jet``.

    Result shape: ``jet.shape + (dim,)*ky + (dim,)*kx`` with y-indices first.
    """
    lay = jet.layout
    dim = lay.nx
    src, weight, idx_shape = _tensor_index(lay, dim, ky, kx)
    vals = jet.c[src] * weight.reshape((-1,) + (1,) * (jet.c.ndim - 1))
    vals = vals.reshape(idx_shape + jet.shape)
    nidx = ky + kx
    return np.moveaxis(vals, tuple(range(nidx)), tuple(range(-nidx, 0)))


class JetTable:
    """All mixed partials of G at one point up to (max_y, max_x).

    Entries are addressed by :class:`PartialSpec`; permuting the order of
    differentiation maps to the same canonical monomial, so lookups are
    bit-identical under permutation.
    """

    def __init__(self, spec, point, jet, max_y, max_x):
        self.spec = spec
        self.point = point
        self.jet = jet
        self.max_y = max_y
        self.max_x = max_x

    def __getitem__(self, idx):
        if isinstance(idx, str):
            idx = PartialSpec.of(self.spec.dim, *idx.split())
        if idx.order_y > self.max_y or idx.order_x > self.max_x:
            raise KeyError(f"{idx} exceeds table orders ({self.max_y}, {self.max_x})")
        return self.jet.partial(idx.exponents)

    @property
    def value(self):
        return self.jet.c[0]

    def tensor(self, ky, kx=0):
        return derivative_tensor(self.jet, ky, kx)

    def items(self):
        """(PartialSpec, value) pairs for every stored monomial."""
        lay = self.jet.layout
        dim = self.spec.dim
        for k, e in enumerate(lay.exps):
            yield PartialSpec(tuple(e[:dim]), tuple(e[dim:])), self.jet.c[k] * lay.weight[k]

    def to_dict(self):
        """JSON-friendly dump keyed by 'x<orders>|y<orders>' strings."""
        out = {}
        for idx, val in self.items():
            key = "x" + "".join(map(str, idx.x)) + "|y" + "".join(map(str, idx.y))
            out[key] = np.asarray(val).tolist()
        return {
            "metric": self.spec.label(),
            "x": self.point.x.tolist(),
            "y": self.point.y.tolist(),
            "max_y": self.max_y,
            "max_x": self.max_x,
            "partials": out,
        }


def eval_partials(spec, p, max_y=MAX_Y, max_x=MAX_X):
    """JetTable of G at ``p`` (an :class:`EvalPoint`) up to the given orders."""
    if not (0 <= max_y <= MAX_Y and 0 <= max_x <= MAX_X):
        raise ValueError(f"orders must satisfy max_y <= {MAX_Y}, max_x <= {MAX_X}")
    if p.dim != spec.dim:
        raise MetricError(f"point dimension {p.dim} != 2n = {spec.dim}")
    jet = metric_jet(spec, p.x, p.y, ((max_x, max_y),))
    return JetTable(spec, p, jet, max_y, max_x)


# ---------------------------------------------------------------------------
# finite-difference oracle

# fourth-order central stencils: order -> (offsets, weights)
_STENCILS = {
    1: (np.arange(-2, 3), np.array([1, -8, 0, 8, -1]) / 12.0),
    2: (np.arange(-2, 3), np.array([-1, 16, -30, 16, -1]) / 12.0),
    3: (np.arange(-3, 4), np.array([1, -8, 13, 0, -13, 8, -1]) / 8.0),
}


@lru_cache(maxsize=None)
def _stencil(exponents):
    """Unit offsets (K, nvar) and weights (K,) of the tensor-product stencil."""
    axes = [(var, *_STENCILS[k]) for var, k in enumerate(exponents) if k]
    off = np.stack(np.meshgrid(*[a[1] for a in axes], indexing="ij"), -1).reshape(-1, len(axes))
    w = np.prod(np.stack(np.meshgrid(*[a[2] for a in axes], indexing="ij"), -1), -1).ravel()
    keep = w != 0
    full = np.zeros((int(keep.sum()), len(exponents)))
    full[:, [a[0] for a in axes]] = off[keep]
    return full, w[keep]


def fd_partials(spec, x, y, idxs, h=None):
    """Central differences of several partials of G (total order <= 3).

    Fourth-order stencils at steps h and h/2 are combined by one Richardson
    step (sixth order overall).  All stencils are evaluated in one batched
    call of G.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    spec.check_domain(x)
    base = np.concatenate([x, y])
    # per-axis length scales: fiber features live on the scale |y|, chart
    # features on the distance to the chart boundary
    sx = 1.0
    if spec.domain_radius is not None:
        sx = min(sx, spec.domain_radius - float(np.linalg.norm(x)))
    sy = float(np.linalg.norm(y))
    scale = np.concatenate([np.full(x.shape, sx), np.full(y.shape, sy)])
    eps = np.finfo(float).eps
    pts, groups = [], []
    start = 0
    for idx in idxs:
        if idx.order > 3:
            raise ValueError("finite differences are limited to total order <= 3")
        if idx.order == 0:
            groups.append((start, np.ones(1), 1.0, None))
            pts.append(base[None])
            start += 1
            continue
        e = np.asarray(idx.exponents)
        step = eps ** (1.0 / (idx.order + 6)) * scale if h is None else np.full(base.shape, h)
        off, w = _stencil(idx.exponents)
        div = float(np.prod(step ** e))
        pts.append(base + step * off)
        pts.append(base + 0.5 * step * off)
        groups.append((start, w, div, div * 0.5 ** idx.order))
        start += 2 * len(w)
    pts = np.concatenate(pts)
    d = spec.dim
    vals = spec.G(pts[:, :d], pts[:, d:])
    out = []
    for k, w, div, div2 in groups:
        coarse = np.dot(w, vals[k:k + len(w)]) / div
        if div2 is None:
            out.append(coarse)
            continue
        fine = np.dot(w, vals[k + len(w):k + 2 * len(w)]) / div2
        out.append((16.0 * fine - coarse) / 15.0)
    return np.array(out)


def fd_partial(spec, x, y, idx, h=None):
    """Central finite difference of the partial ``idx`` of G (see :func:`fd_partials`)."""
    return float(fd_partials(spec, x, y, [idx], h)[0])


def fd_crosscheck(spec, p, idx, table=None):
    """|jet - fd| / max(1, |fd|) for one partial (or a list) of total order <= 3."""
    many = isinstance(idx, (list, tuple))
    idxs = list(idx) if many else [idx]
    if any(i.order > 3 for i in idxs):
        raise ValueError("fd_crosscheck supports total order <= 3")
    if table is None:
        table = eval_partials(spec, p, max_y=max(i.order_y for i in idxs),
                              max_x=max(i.order_x for i in idxs))
    exact = np.array([float(table[i]) for i in idxs])
    fd = fd_partials(spec, p.x, p.y, idxs)
    res = np.abs(exact - fd) / np.maximum(1.0, np.abs(fd))
    return res if many else float(res[0])

"""Truncated multivariate Taylor arithmetic over split (x, y) variables.

A :class:`Jet` stores the Taylor coefficients of a (possibly tensor-valued,
possibly batched) quantity in the perturbations ``dx`` (``nx`` variables) and
``dy`` (``ny`` variables) around an expansion point.  Which monomials are kept
is governed by a downward-closed set of admissible (x-degree, y-degree) pairs,
described by its maximal corners.  A jet valid on corners ``{(2, 5)}`` carries
every monomial of x-degree <= 2 and y-degree <= 5.

Coefficient arrays have the monomial axis first: ``c.shape == (N, *shape)``.
Arithmetic is exact up to truncation; derivatives are read off the
coefficients (times the multi-index factorial).
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

__all__ = [
    "Layout",
    "Jet",
    "JetDomainError",
    "sqrt",
    "exp",
    "log",
    "power",
    "conj",
    "real",
    "imag",
    "einsum",
    "solve",
    "stack",
]

# Upper bound on (pairs x trailing elements) materialized at once in products.
_CHUNK = 1 << 21


class JetDomainError(ArithmeticError):
    """Raised when a jet function is applied outside its smooth domain."""


def _normalize_corners(corners):
    pts = {(int(a), int(b)) for a, b in corners if a >= 0 and b >= 0}
    keep = [
        p for p in pts
        if not any(q != p and q[0] >= p[0] and q[1] >= p[1] for q in pts)
    ]
    return tuple(sorted(keep))


def _monomials(nvar, maxdeg):
    """Exponent vectors in ``nvar`` variables, grouped by total degree."""
    out = {}
    for d in range(maxdeg + 1):
        rows = []
        for combo in itertools.combinations_with_replacement(range(nvar), d):
            e = [0] * nvar
            for v in combo:
                e[v] += 1
            rows.append(tuple(e))
        out[d] = rows
    return out


class Layout:
    """Monomial basis shared by all jets with the same variables and corners."""

    def __init__(self, nx, ny, corners):
        self.nx = nx
        self.ny = ny
        self.nvar = nx + ny
        self.corners = corners
        self.max_x = max((a for a, _ in corners), default=-1)
        self.max_y = max((b for _, b in corners), default=-1)
        xm = _monomials(nx, max(self.max_x, 0))
        ym = _monomials(ny, max(self.max_y, 0))
        exps = []
        for total in range(self.max_x + self.max_y + 1):
            for dx in range(0, min(total, self.max_x) + 1):
                dy = total - dx
                if dy > self.max_y or not self.allows(dx, dy):
                    continue
                for ex in xm[dx]:
                    for ey in ym[dy]:
                        exps.append(ex + ey)
        self.exps = np.array(exps, dtype=np.int64).reshape(-1, self.nvar)
        self.size = len(exps)
        self.xdeg = self.exps[:, :nx].sum(axis=1)
        self.ydeg = self.exps[:, nx:].sum(axis=1)
        self.degree = self.xdeg + self.ydeg
        self.index = {e: k for k, e in enumerate(exps)}
        self.weight = np.array(
            [math.prod(math.factorial(int(a)) for a in e) for e in exps], dtype=float
        )
        self._base = 2 * int(max(self.max_x + self.max_y, 1)) + 1
        self._codes = self._encode(self.exps)
        self._order = np.argsort(self._codes)
        self._sorted_codes = self._codes[self._order]
        self._pairs = None
        self._diff = {}
        self._restrict = {}

    # -- construction -----------------------------------------------------
    @staticmethod
    def get(nx, ny, corners):
        return _layout(int(nx), int(ny), _normalize_corners(corners))

    def __repr__(self):
        return f"Layout(nx={self.nx}, ny={self.ny}, corners={self.corners}, N={self.size})"

    def allows(self, dx, dy):
        return any(dx <= a and dy <= b for a, b in self.corners)

    def _encode(self, exps):
        powers = self._base ** np.arange(self.nvar, dtype=np.int64)
        return exps @ powers

    def lookup(self, exps):
        """Indices of exponent rows ``exps`` (``-1`` where not in the layout)."""
        codes = self._encode(np.asarray(exps, dtype=np.int64))
        pos = np.searchsorted(self._sorted_codes, codes)
        pos = np.clip(pos, 0, self.size - 1)
        hit = self._sorted_codes[pos] == codes
        return np.where(hit, self._order[pos], -1)

    # -- structure tables ---------------------------------------------------
    def pairs(self):
        """Index triples (i, j, k) with monomial_i * monomial_j = monomial_k."""
        if self._pairs is None:
            max_total = self.max_x + self.max_y
            pi, pj, pk = [], [], []
            step = max(1, (1 << 20) // max(self.size, 1))
            for start in range(0, self.size, step):
                rows = np.arange(start, min(start + step, self.size))
                ok = self.degree[rows][:, None] + self.degree[None, :] <= max_total
                ii, jj = np.nonzero(ok)
                ii = rows[ii]
                xs = self.xdeg[ii] + self.xdeg[jj]
                ys = self.ydeg[ii] + self.ydeg[jj]
                adm = np.zeros(len(ii), dtype=bool)
                for a, b in self.corners:
                    adm |= (xs <= a) & (ys <= b)
                ii, jj = ii[adm], jj[adm]
                codes = self._codes[ii] + self._codes[jj]
                pos = np.searchsorted(self._sorted_codes, codes)
                pos = np.clip(pos, 0, self.size - 1)
                hit = self._sorted_codes[pos] == codes
                pi.append(ii[hit])
                pj.append(jj[hit])
                pk.append(self._order[pos[hit]])
            pi, pj, pk = np.concatenate(pi), np.concatenate(pj), np.concatenate(pk)
            # sorted by target so products can be summed with reduceat
            order = np.argsort(pk, kind="stable")
            self._pairs = (pi[order], pj[order], pk[order])
        return self._pairs

    def derivative_layout(self, var):
        if var < self.nx:
            corners = [(a - 1, b) for a, b in self.corners]
        else:
            corners = [(a, b - 1) for a, b in self.corners]
        return Layout.get(self.nx, self.ny, tuple(corners))

    def diff_table(self, var):
        if var not in self._diff:
            target = self.derivative_layout(var)
            shifted = target.exps.copy()
            shifted[:, var] += 1
            src = self.lookup(shifted)
            factor = shifted[:, var].astype(float)
            self._diff[var] = (target, src, factor)
        return self._diff[var]

    def restrict_table(self, target):
        key = target.corners
        if key not in self._restrict:
            src = self.lookup(target.exps)
            if np.any(src < 0):
                raise ValueError(f"{target} is not contained in {self}")
            self._restrict[key] = src
        return self._restrict[key]

    def meet(self, other):
        if self is other:
            return self
        corners = [
            (min(a1, a2), min(b1, b2))
            for a1, b1 in self.corners
            for a2, b2 in other.corners
        ]
        return Layout.get(self.nx, self.ny, tuple(corners))

    def unit(self, var):
        """Index of the linear monomial in variable ``var``."""
        e = [0] * self.nvar
        e[var] = 1
        return self.index[tuple(e)]


@lru_cache(maxsize=None)
def _layout(nx, ny, corners):
    return Layout(nx, ny, corners)


def _as_layout_pair(a, b):
    if a.layout is b.layout:
        return a, b
    lay = a.layout.meet(b.layout)
    return a.restrict(lay), b.restrict(lay)


class Jet:
    """Truncated Taylor expansion with coefficient array ``c`` of shape (N, *shape)."""

    __slots__ = ("layout", "c")
    __array_priority__ = 100

    def __init__(self, layout, c):
        self.layout = layout
        self.c = c

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, layout, value):
        value = np.asarray(value)
        c = np.zeros((layout.size,) + value.shape, dtype=np.result_type(value, float))
        c[0] = value
        return cls(layout, c)

    @classmethod
    def variable(cls, layout, var, value):
        """The jet of coordinate ``var`` expanded about ``value``."""
        jet = cls.constant(layout, value)
        jet.c[layout.unit(var)] = 1.0
        return jet

    # -- basic protocol -----------------------------------------------------
    @property
    def shape(self):
        return self.c.shape[1:]

    @property
    def value(self):
        return self.c[0]

    def __repr__(self):
        return f"Jet({self.layout!r}, shape={self.shape})"

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.layout, self.c[(slice(None),) + key])

    def reshape(self, *shape):
        return Jet(self.layout, self.c.reshape((self.layout.size,) + tuple(shape)))

    def copy(self):
        return Jet(self.layout, self.c.copy())

    def restrict(self, layout):
        if layout is self.layout:
            return self
        return Jet(layout, self.c[self.layout.restrict_table(layout)])

    def diff(self, var):
        target, src, factor = self.layout.diff_table(var)
        fac = factor.reshape((-1,) + (1,) * (self.c.ndim - 1))
        return Jet(target, self.c[src] * fac)

    def partial(self, exps):
        """Partial derivative for exponent vector ``exps`` (ndarray over shape)."""
        k = self.layout.index.get(tuple(int(e) for e in exps))
        if k is None:
            raise KeyError(f"monomial {tuple(exps)} outside {self.layout}")
        return self.c[k] * self.layout.weight[k]

    def nilpotent(self):
        out = self.c.copy()
        out[0] = 0
        return Jet(self.layout, out)

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = _as_layout_pair(self, other)
            return Jet(a.layout, a.c + b.c)
        other = np.asarray(other)
        tail = np.broadcast_shapes(self.shape, other.shape)
        dtype = np.result_type(self.c.dtype, other.dtype)
        c = np.array(np.broadcast_to(self.c, (self.layout.size,) + tail), dtype=dtype)
        c[0] += other
        return Jet(self.layout, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.layout, -self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return _product(self, other, None)
        return Jet(self.layout, self.c * np.asarray(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * power(other, -1)
        return Jet(self.layout, self.c / np.asarray(other))

    def __rtruediv__(self, other):
        return power(self, -1) * other

    def __pow__(self, p):
        return power(self, p)

    def conj(self):
        return Jet(self.layout, np.conj(self.c))

    @property
    def real(self):
        return Jet(self.layout, np.real(self.c).copy())

    @property
    def imag(self):
        return Jet(self.layout, np.imag(self.c).copy())


# ---------------------------------------------------------------------------
# products


def _nonzero_rows(c):
    return np.any(c.reshape(c.shape[0], -1) != 0, axis=1)


def _product(a, b, subscripts):
    """Truncated product of two jets; ``subscripts`` is a trailing einsum spec."""
    a, b = _as_layout_pair(a, b)
    lay = a.layout
    pi, pj, pk = lay.pairs()
    keep = _nonzero_rows(a.c)[pi] & _nonzero_rows(b.c)[pj]
    pi, pj, pk = pi[keep], pj[keep], pk[keep]
    if subscripts is None:
        tail = np.broadcast_shapes(a.shape, b.shape)
    else:
        probe = np.einsum(subscripts, np.zeros(a.shape), np.zeros(b.shape))
        tail = probe.shape
    dtype = np.result_type(a.c.dtype, b.c.dtype)
    out = np.zeros((lay.size, int(np.prod(tail, dtype=np.int64))), dtype=dtype)
    if len(pi) == 0:
        return Jet(lay, out.reshape((lay.size,) + tail))
    per = max(1, *(int(np.prod(s, dtype=np.int64)) for s in (a.shape, b.shape, tail)))
    step = max(1, _CHUNK // per)
    if subscripts is not None:
        lhs, rhs = subscripts.split("->")
        sa, sb = lhs.split(",")
        spec = f"Z{sa},Z{sb}->Z{rhs}"
    for s in range(0, len(pi), step):
        ci, cj, ck = pi[s:s + step], pj[s:s + step], pk[s:s + step]
        if subscripts is None:
            prod = a.c[ci] * b.c[cj]
        else:
            prod = np.einsum(spec, a.c[ci], b.c[cj])
        prod = prod.reshape(len(ci), -1)
        starts = np.flatnonzero(np.r_[True, ck[1:] != ck[:-1]])
        out[ck[starts]] += np.add.reduceat(prod, starts, axis=0)
    return Jet(lay, out.reshape((lay.size,) + tail))


def einsum(subscripts, a, b):
    """Two-operand einsum where either operand may be a jet or a plain array."""
    if isinstance(a, Jet) and isinstance(b, Jet):
        return _product(a, b, subscripts)
    lhs, rhs = subscripts.split("->")
    sa, sb = lhs.split(",")
    if isinstance(a, Jet):
        return Jet(a.layout, np.einsum(f"Z{sa},{sb}->Z{rhs}", a.c, b))
    if isinstance(b, Jet):
        return Jet(b.layout, np.einsum(f"{sa},Z{sb}->Z{rhs}", a, b.c))
    return np.einsum(subscripts, a, b)


def stack(jets, axis=0):
    """Stack jets along a new trailing axis (``axis`` counts trailing dims)."""
    lay = jets[0].layout
    for j in jets[1:]:
        lay = lay.meet(j.layout)
    cs = [j.restrict(lay).c for j in jets]
    return Jet(lay, np.stack(cs, axis=axis + 1 if axis >= 0 else axis))


def solve(a, b):
    """Solve ``a @ x = b`` for jets: ``a`` (..., m, m), ``b`` (..., m, k) or (..., m)."""
    vector = b.shape[-1:] != () and len(b.shape) == len(a.shape) - 1
    if vector:
        b = b.reshape(*b.shape, 1)
    lay = a.layout.meet(b.layout)
    a = a.restrict(lay)
    b = b.restrict(lay)
    a0 = a.c[0]
    try:
        a0inv = np.linalg.inv(a0)
    except np.linalg.LinAlgError as exc:
        raise JetDomainError("singular matrix at expansion point") from exc
    at = a.nilpotent()
    x = einsum("...ij,...jk->...ik", a0inv, b)
    depth = lay.max_x + lay.max_y
    for _ in range(depth):
        x = einsum("...ij,...jk->...ik", a0inv, b - einsum("...ij,...jk->...ik", at, x))
    if vector:
        x = x[..., 0]
    return x


# ---------------------------------------------------------------------------
# scalar functions via Taylor composition


def _compose(a, coeffs):
    """sum_m coeffs[m] * (a - a0)^m by Horner, coeffs[m] arrays over a.shape."""
    t = a.nilpotent()
    if not np.any(t.c):
        return Jet.constant(a.layout, coeffs[0]) if len(coeffs) else a
    acc = Jet.constant(a.layout, coeffs[-1])
    for cm in coeffs[-2::-1]:
        acc = acc * t + cm
    return acc


def _depth(a):
    lay = a.layout
    nz = _nonzero_rows(a.c)
    nz[0] = False
    if not nz.any():
        return 0
    mind = lay.degree[nz].min()
    return (lay.max_x + lay.max_y) // max(int(mind), 1)


def _positive_base(a0, what):
    a0 = np.asarray(a0)
    if np.iscomplexobj(a0):
        if np.any(np.abs(a0.imag) > 1e-12 * np.maximum(1.0, np.abs(a0.real))):
            raise JetDomainError(f"{what} of a non-real value")
        a0 = a0.real
    if np.any(a0 <= 0):
        raise JetDomainError(f"{what} requires a strictly positive value, got min {a0.min()}")
    return a0


def power(a, p):
    if not isinstance(a, Jet):
        a = np.asarray(a)
        if float(p).is_integer():
            return a ** int(p)
        return _positive_base(a, "power") ** p
    if float(p).is_integer():
        p = int(p)
        if p == 0:
            return Jet.constant(a.layout, np.ones(a.shape, dtype=a.c.dtype))
        if p > 0:
            out = None
            base = a
            while p:
                if p & 1:
                    out = base if out is None else out * base
                p >>= 1
                if p:
                    base = base * base
            return out
        a0 = a.c[0]
        if np.any(a0 == 0):
            raise JetDomainError("division by zero")
        d = _depth(a)
        coeffs = [(-1.0) ** m * a0 ** (-(m + 1)) for m in range(d + 1)]
        inv = _compose(a, coeffs)
        return inv if p == -1 else power(inv, -p)
    a0 = _positive_base(a.c[0], "fractional power")
    d = _depth(a)
    coeffs = []
    binom = 1.0
    for m in range(d + 1):
        coeffs.append(binom * a0 ** (p - m))
        binom *= (p - m) / (m + 1)
    return _compose(a, coeffs)


def sqrt(a):
    if not isinstance(a, Jet):
        return np.sqrt(_positive_base(a, "sqrt"))
    return power(a, 0.5)


def exp(a):
    if not isinstance(a, Jet):
        return np.exp(a)
    e0 = np.exp(a.c[0])
    d = _depth(a)
    return _compose(a, [e0 / math.factorial(m) for m in range(d + 1)])


def log(a):
    if not isinstance(a, Jet):
        return np.log(_positive_base(a, "log"))
    a0 = _positive_base(a.c[0], "log")
    d = _depth(a)
    coeffs = [np.log(a0)]
    for m in range(1, d + 1):
        coeffs.append((-1.0) ** (m + 1) / (m * a0 ** m))
    return _compose(a, coeffs)


def conj(a):
    return a.conj() if isinstance(a, Jet) else np.conj(a)


def real(a):
    return a.real if isinstance(a, Jet) else np.real(a)


def imag(a):
    return a.imag if isinstance(a, Jet) else np.imag(a)

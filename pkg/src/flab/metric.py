"""Metric definitions: validated specs, the built-in catalog, JSON documents."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsl import DSLSyntaxError, MetricExpr, evaluate, parse_metric, to_text, variables
from .report import Report

__all__ = [
    "MetricSpec",
    "MetricError",
    "CatalogEntry",
    "CATALOG",
    "Sampling",
    "catalog_get",
    "metric_from_expression",
    "load_metric",
    "validate_homogeneity",
    "sample_points",
    "to_complex",
    "to_real",
]

PROPERTIES = frozenset({"hermitian", "kahler", "weakly_kahler", "strongly_convex"})


class MetricError(ValueError):
    """Invalid metric definition, parameters or evaluation domain."""


def to_complex(y):
    """Real 2n-vector(s) -> complex n-vector(s): v^a = y^a + i y^(a+n)."""
    y = np.asarray(y, dtype=float)
    n = y.shape[-1] // 2
    return y[..., :n] + 1j * y[..., n:]


def to_real(v):
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real, v.imag], axis=-1)


@dataclass(frozen=True)
class MetricSpec:
    """A metric function G(z, v) on a single coordinate chart of C^n.

    ``domain_radius`` (if set) restricts the chart to |z| < domain_radius;
    ``sample_radius`` bounds the coordinate box used for random probes.
    ``declared_properties`` is advisory: every claim is re-checked numerically.
    """

    name: str
    n: int
    expr: MetricExpr
    params: tuple = ()
    declared_properties: frozenset = frozenset()
    domain_radius: float | None = None
    sample_radius: float = 0.5
    reference: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def text(self):
        return to_text(self.expr)

    @property
    def dim(self):
        """Real dimension 2n."""
        return 2 * self.n

    def label(self):
        if self.params:
            return f"{self.name}({', '.join(format(p, 'g') for p in self.params)})"
        return self.name

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        if self.domain_radius is None:
            return np.ones(x.shape[:-1], dtype=bool)
        return np.sum(x**2, axis=-1) < self.domain_radius**2

    def check_domain(self, x):
        if not np.all(self.in_domain(x)):
            raise MetricError(
                f"point outside the chart of {self.label()} (|z| < {self.domain_radius})"
            )

    def complex_value(self, x, y):
        z = to_complex(x)
        v = to_complex(y)
        zs = [z[..., k] for k in range(self.n)]
        vs = [v[..., k] for k in range(self.n)]
        with np.errstate(all="ignore"):
            out = evaluate(self.expr, zs, vs)
        return np.broadcast_to(np.asarray(out, dtype=complex), np.broadcast_shapes(
            np.shape(x)[:-1], np.shape(y)[:-1]))

    def G(self, x, y):
        """G at real coordinates (x, y); arrays broadcast over leading axes."""
        return np.real(self.complex_value(x, y))

    def F(self, x, y):
        return np.sqrt(self.G(x, y))

    def validate(self, count=64, seed=12345):
        """Structural checks plus sampled realness and homogeneity; raises MetricError."""
        if int(self.n) != self.n or self.n < 1:
            raise MetricError(f"complex dimension must be a positive integer, got {self.n}")
        bad = sorted(f"{k}{i}" for k, i in variables(self.expr) if not 1 <= i <= self.n)
        if bad:
            raise MetricError(f"variable index out of range for n={self.n}: {', '.join(bad)}")
        unknown = set(self.declared_properties) - PROPERTIES
        if unknown:
            raise MetricError(f"unknown declared properties {sorted(unknown)}")
        rng = np.random.default_rng(seed)
        x, y = sample_points(self, rng, count)
        val = self.complex_value(x, y)
        ok = np.isfinite(val)
        if not np.any(ok):
            raise MetricError("metric is not finite at any sample point")
        imag = np.abs(val.imag[ok])
        if np.any(imag >= 1e-12 * np.maximum(1.0, np.abs(val.real[ok]))):
            raise MetricError("metric expression is not real-valued")
        if np.any(val.real[ok] <= 0):
            raise MetricError("metric is not positive off the zero section")
        rep = validate_homogeneity(self, Sampling(seed=seed, count=count))
        if not rep.passed:
            raise MetricError(
                f"homogeneity G(z, zeta v) = |zeta|^2 G(z, v) fails: residual {rep.max_residual:.3g}"
            )
        return self


@dataclass(frozen=True)
class Sampling:
    """Seeded sampling configuration for probes."""

    seed: int = 0
    count: int = 100
    box: float | None = None


def sample_points(spec, rng, count, box=None):
    """Random (x, y) pairs with x inside the chart box/domain and generic y."""
    box = spec.sample_radius if box is None else box
    xs = []
    need = count
    while need > 0:
        cand = rng.uniform(-box, box, size=(max(2 * need, 8), spec.dim))
        cand = cand[spec.in_domain(cand)]
        xs.append(cand[:need])
        need -= len(cand[:need])
    x = np.concatenate(xs)[:count]
    y = rng.standard_normal((count, spec.dim))
    return x, y


def validate_homogeneity(spec, sampling=None):
    """Max relative residual |G(z, zeta v) - |zeta|^2 G(z, v)| / G(z, v) over samples."""
    sampling = sampling or Sampling()
    t0 = time.perf_counter()
    rng = np.random.default_rng(sampling.seed)
    x, y = sample_points(spec, rng, sampling.count, sampling.box)
    zeta = rng.standard_normal(sampling.count) + 1j * rng.standard_normal(sampling.count)
    v = to_complex(y)
    y2 = to_real(zeta[:, None] * v)
    g1 = spec.G(x, y)
    g2 = spec.G(x, y2)
    res = np.abs(g2 - np.abs(zeta) ** 2 * g1) / np.abs(g1)
    failures = int(np.sum(~np.isfinite(res)))
    return Report(
        check="homogeneity",
        metric=spec.label(),
        params={"n": spec.n, "expression": spec.text},
        seed=sampling.seed,
        samples=sampling.count,
        residuals=res[np.isfinite(res)].tolist(),
        tolerance=1e-9,
        failures=failures,
        runtime=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# catalog


def _sum(terms, sep=" + "):
    return sep.join(terms)


def _abs2_sum(kind, n):
    return _sum(f"abs2({kind}{k})" for k in range(1, n + 1))


def _inner(n):
    return _sum(f"conj(z{k}) * v{k}" for k in range(1, n + 1))


def _euclidean(n):
    return _abs2_sum("v", n)


def _fubini_study(n):
    s = f"1 + {_abs2_sum('z', n)}"
    return f"(({s}) * ({_abs2_sum('v', n)}) - abs2({_inner(n)})) / ({s})^2"


def _complex_hyperbolic(n):
    s = "1 - " + _sum((f"abs2(z{k})" for k in range(1, n + 1)), " - ")
    return f"(({s}) * ({_abs2_sum('v', n)}) + abs2({_inner(n)})) / ({s})^2"


def _hermitian_nonkahler(n):
    return "(1 + abs2(z2)) * abs2(v1) + abs2(v2)"


def _quartic(n):
    return "sqrt(" + _sum(f"abs2(v{k})^2" for k in range(1, n + 1)) + ")"


@dataclass(frozen=True)
class CatalogEntry:
    """A named closed-form metric family.

    ``reference`` holds known curvature data: ``H`` (constant holomorphic
    curvature), ``lambda`` (comparison constant with Ric_perp >= (2n-2)lambda,
    H >= 4 lambda) and ``conjugate_time``.
    """

    name: str
    generator: object
    default_n: int
    fixed_n: int | None
    properties: frozenset
    domain_radius: float | None = None
    sample_radius: float = 0.5
    reference: dict = field(default_factory=dict)

    def make(self, n=None):
        n = self.default_n if n is None else n
        if isinstance(n, float):
            if not n.is_integer():
                raise MetricError(f"{self.name}: n must be an integer, got {n}")
            n = int(n)
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise MetricError(f"{self.name}: n must be a positive integer, got {n!r}")
        if self.fixed_n is not None and n != self.fixed_n:
            raise MetricError(f"{self.name} is defined only for n = {self.fixed_n}")
        spec = MetricSpec(
            name=self.name,
            n=int(n),
            expr=parse_metric(self.generator(int(n))),
            params=(int(n),),
            declared_properties=self.properties,
            domain_radius=self.domain_radius,
            sample_radius=self.sample_radius,
            reference=dict(self.reference),
        )
        return spec.validate()


_KAHLER = frozenset({"hermitian", "kahler", "weakly_kahler", "strongly_convex"})

CATALOG = {
    e.name: e
    for e in [
        CatalogEntry("euclidean", _euclidean, 2, None, _KAHLER,
                     reference={"H": 0.0, "lambda": 0.0}),
        CatalogEntry("fubini_study", _fubini_study, 2, None, _KAHLER,
                     sample_radius=0.5,
                     reference={"H": 4.0, "lambda": 1.0, "conjugate_time": np.pi / 2}),
        CatalogEntry("complex_hyperbolic", _complex_hyperbolic, 2, None, _KAHLER,
                     domain_radius=1.0, sample_radius=0.45,
                     reference={"H": -4.0, "lambda": -1.0}),
        CatalogEntry("hermitian_nonkahler", _hermitian_nonkahler, 2, 2,
                     frozenset({"hermitian", "strongly_convex"}), sample_radius=1.0),
        CatalogEntry("complex_minkowski_quartic", _quartic, 2, None,
                     frozenset({"weakly_kahler", "kahler", "strongly_convex"}),
                     reference={"H": 0.0}),
    ]
}


def catalog_get(name, params=()):
    """Instantiate catalog metric ``name``; ``params`` is ``(n,)`` or empty."""
    if name not in CATALOG:
        raise MetricError(f"unknown catalog metric {name!r}; known: {', '.join(CATALOG)}")
    params = tuple(params) if np.ndim(params) else (params,)
    if len(params) > 1:
        raise MetricError(f"{name} takes at most one parameter (n), got {params}")
    return CATALOG[name].make(*params)


def metric_from_expression(text, n, name="custom", properties=(), domain_radius=None,
                           sample_radius=0.5, validate=True):
    try:
        expr = parse_metric(text)
    except DSLSyntaxError as exc:
        raise MetricError(str(exc)) from exc
    spec = MetricSpec(
        name=name,
        n=int(n),
        expr=expr,
        declared_properties=frozenset(properties),
        domain_radius=domain_radius,
        sample_radius=sample_radius,
    )
    return spec.validate() if validate else spec


def load_metric(source, n=None):
    """Resolve a catalog name, a JSON document (dict) or a path to one.

    Documents look like ``{"name": ..., "n": 2}`` for catalog metrics or
    ``{"name": ..., "n": 2, "expression": "..."}`` for custom ones.
    """
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, (str, Path)) and str(source) in CATALOG:
        return catalog_get(str(source), () if n is None else (n,))
    else:
        path = Path(source)
        if not path.exists():
            raise MetricError(f"unknown metric {source!r} (not in catalog, no such file)")
        doc = json.loads(path.read_text())
    dim = doc.get("n", n)
    if "expression" in doc:
        if dim is None:
            raise MetricError("custom metric document needs 'n'")
        return metric_from_expression(
            doc["expression"], dim, name=doc.get("name", "custom"),
            properties=doc.get("properties", ()),
            domain_radius=doc.get("domain_radius"),
            sample_radius=doc.get("sample_radius", 0.5),
        )
    params = doc.get("params")
    if params is None:
        params = () if dim is None else (dim,)
    return catalog_get(doc["name"], params)

"""Monte-Carlo volumes of geodesic balls in exponential polar coordinates.

With x = exp_p(t u), u on the indicatrix at p parametrized by Euclidean unit
directions w (u = w / F(p, w)), the measure sigma(x) dx becomes

    F(p, w)^(-2n) * sigma(gamma(t)) * sqrt(det g_u(p) / det g_T(gamma(t))) * det A(t) dt dS(w)

where A is the T-perp Jacobi matrix in a parallel g_T-orthonormal frame.
Directions are sampled uniformly on the sphere; along each geodesic the
integrand is interpolated at Chebyshev nodes and sampled at uniform random
radii, so that the sample budget is directions x radial samples.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import chebyshev as C

from .geodesic import GeodesicControl, integrate_geodesic, jacobi_matrix
from .metric import catalog_get
from .partials import EvalPoint, derivative_tensor, metric_jet
from .real_engine import (
    busemann_hausdorff_density,
    riemannian_det_density,
    s_curvature,
    sphere_rule,
)
from .report import Report

__all__ = [
    "MonteCarloConfig",
    "VolumeEstimate",
    "measure_density",
    "model_metric",
    "ball_volumes",
    "volume_ratio",
]

MEASURES = ("riemannian_det", "busemann_hausdorff")


@dataclass(frozen=True)
class MonteCarloConfig:
    """Sampling budget: ``directions`` x ``radial`` integrand samples per ball."""

    directions: int = 1000
    radial: int = 1000
    seed: int = 0
    chunk: int = 200
    cheb_nodes: int = 49
    density_level: int = 4
    s_samples: int = 20
    s_tol: float = 1e-6
    workers: int | None = None

    @property
    def budget(self):
        return self.directions * self.radial


def _sphere(rng, count, dim):
    w = rng.standard_normal((count, dim))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def measure_density(spec, x, measure="riemannian_det", rule=None):
    """Density sigma(x) of the volume form, batched over leading axes of x.

    ``riemannian_det`` averages sqrt(det g(x, w)) over unit directions w;
    ``busemann_hausdorff`` is the ratio of the Euclidean unit ball to the
    indicatrix volume.  Direction averages use ``rule`` (a
    :class:`~flab.real_engine.SphereRule`).
    """
    rule = rule or sphere_rule(spec.n)
    if measure == "riemannian_det":
        return riemannian_det_density(spec, x, rule)
    if measure == "busemann_hausdorff":
        return busemann_hausdorff_density(spec, x, rule)
    raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")


def model_metric(lam, n):
    """Catalog space form with holomorphic curvature 4*lam (lam in {1, 0, -1})."""
    names = {1.0: "fubini_study", 0.0: "euclidean", -1.0: "complex_hyperbolic"}
    if float(lam) not in names:
        raise ValueError("model volumes are available for lambda in {1, 0, -1}")
    return catalog_get(names[float(lam)], (n,))


@dataclass
class VolumeEstimate:
    """Ball volumes around ``center`` with Monte-Carlo standard errors."""

    metric: str
    measure: str
    center: np.ndarray
    radii: np.ndarray
    volumes: np.ndarray
    stderr: np.ndarray
    samples: np.ndarray = field(repr=False)
    excluded: int = 0
    model: "VolumeEstimate | None" = None

    def ratio(self, i, j):
        """Vol(radii[j]) / Vol(radii[i]) and its delta-method standard error."""
        a = self.samples[:, j]
        b = self.samples[:, i]
        q = a.mean() / b.mean()
        resid = a - q * b
        se = resid.std(ddof=1) / (math.sqrt(len(a)) * b.mean())
        return float(q), float(se)

    @property
    def model_volumes(self):
        return None if self.model is None else self.model.volumes

    def to_dict(self):
        out = {
            "metric": self.metric,
            "measure": self.measure,
            "center": self.center,
            "radii": self.radii,
            "volumes": self.volumes,
            "stderr": self.stderr,
            "excluded": self.excluded,
        }
        if self.model is not None:
            out["model"] = self.model.to_dict()
        return out


def _chunk_samples(spec, p, W, R, radii, measure, cfg, rng_t, dens_rule):
    """Per-direction ball-volume samples for one chunk of sphere directions."""
    n = spec.n
    dim = spec.dim
    B = len(W)
    P = np.broadcast_to(p, W.shape)
    Fw = np.sqrt(spec.G(P, W))
    U = W / Fw[:, None]
    path = integrate_geodesic(spec, P, U, R)
    keep = path.kept
    jac = jacobi_matrix(path, GeodesicControl(cheb_tol=1e-10))
    M = cfg.cheb_nodes
    s = -np.cos(np.pi * np.arange(M) / (M - 1))
    ts = 0.5 * R * (s + 1.0)
    x, T, _ = path.state(ts)
    gT = 0.5 * derivative_tensor(metric_jet(spec, x, T, ((0, 2),)), 2)
    sig = measure_density(spec, x, measure, dens_rule)
    g0 = 0.5 * derivative_tensor(metric_jet(spec, P[keep], U[keep], ((0, 2),)), 2)
    detA = np.linalg.det(jac.A(ts))
    h = sig * np.sqrt(np.linalg.det(g0)[:, None] / np.linalg.det(gT)) * detA
    coef = C.chebfit(s, h.T, M - 1)  # (M, Bk)
    tr = rng_t.uniform(0.0, R, size=(len(keep), cfg.radial))
    sr = 2.0 * tr / R - 1.0
    # Clenshaw per direction
    b1 = np.zeros_like(sr)
    b2 = np.zeros_like(sr)
    for k in range(M - 1, 0, -1):
        b1, b2 = coef[k][:, None] + 2 * sr * b1 - b2, b1
    vals = coef[0][:, None] + sr * b1 - b2
    weight = Fw[keep] ** (-2.0 * n)
    out = np.empty((len(keep), len(radii)))
    for j, r in enumerate(radii):
        out[:, j] = weight * R * np.mean(np.where(tr < r, vals, 0.0), axis=1)
    # excluded directions contribute zero only if they truly left the ball; count them
    full = np.zeros((B, len(radii)))
    full[keep] = out
    return full, B - len(keep)


def ball_volumes(spec, p, radii, measure="riemannian_det", config=None):
    """Monte-Carlo volumes Vol(B_p(r)) for each r in ``radii``.

    Radii must lie below the conjugate time along every sampled direction;
    geodesics that leave the chart are counted in ``excluded``.
    """
    cfg = config or MonteCarloConfig()
    radii = np.asarray(sorted(radii), dtype=float)
    p = np.asarray(p, dtype=float)
    R = float(radii[-1])
    dim = spec.dim
    rng = np.random.default_rng(cfg.seed)
    W = _sphere(rng, cfg.directions, dim)
    dens_rule = sphere_rule(spec.n, cfg.density_level)
    chunks = [W[k:k + cfg.chunk] for k in range(0, len(W), cfg.chunk)]
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(chunks))
    workers = cfg.workers or int(os.environ.get("FLAB_THREADS", "1") or 1)

    def job(k):
        return _chunk_samples(spec, p, chunks[k], R, radii, measure, cfg,
                              np.random.default_rng(seeds[k]), dens_rule)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, range(len(chunks))))
    else:
        results = [job(k) for k in range(len(chunks))]
    samples = np.concatenate([r[0] for r in results])
    excluded = sum(r[1] for r in results)
    area = 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    samples = area * samples
    vol = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(len(samples))
    return VolumeEstimate(metric=spec.label(), measure=str(measure), center=p, radii=radii,
                          volumes=vol, stderr=se, samples=samples, excluded=int(excluded))


def _s_curvature_samples(spec, p, measure, cfg, R):
    rng = np.random.default_rng(cfg.seed + 7919)
    dim = spec.dim
    out = []
    for _ in range(cfg.s_samples):
        # points inside the ball around p, generic directions
        w = _sphere(rng, 1, dim)[0]
        x = p + rng.uniform(0.0, 0.5 * R) * w / max(1.0, np.sqrt(spec.G(p, w)))
        if not spec.in_domain(x[None])[0]:
            continue
        y = rng.standard_normal(dim)
        out.append(abs(s_curvature(spec, EvalPoint(x, y), measure)))
    return np.array(out)


def volume_ratio(spec, lam, p=None, radii=(0.3, 0.6, 0.9), measure="riemannian_det",
                 config=None, model=None, model_center=None):
    """Compare ball-volume ratios against the model space computed by the same pipeline.

    The model defaults to the catalog space form with H = 4*lam centred at the
    origin with an independent seed; the metric's centre defaults to a fixed
    off-origin point.  Rows are emitted for every radius pair r < R with the
    ratios Vol(R)/Vol(r), their standard errors, the 3-sigma agreement
    residual |q - q_K| / (3 sigma) and the inequality slack.

    Returns
    -------
    (VolumeEstimate, Report)
    """
    t0 = time.perf_counter()
    cfg = config or MonteCarloConfig()
    dim = spec.dim
    if p is None:
        p = np.zeros(dim)
        p[0] = 0.2
        p[dim - 1] = -0.1
    p = np.asarray(p, dtype=float)
    radii = np.asarray(sorted(radii), dtype=float)
    model = model or model_metric(lam, spec.n)
    mc = np.zeros(dim) if model_center is None else np.asarray(model_center, dtype=float)
    svals = _s_curvature_samples(spec, p, measure, cfg, radii[-1])
    hyp_ok = bool(len(svals) and np.max(svals) < cfg.s_tol)
    notes = [f"S-curvature max {float(np.max(svals)) if len(svals) else float('nan'):.3e} "
             f"under {measure} (gate {cfg.s_tol:g})",
             f"model {model.label()} centred at {mc.tolist()} with seed {cfg.seed + 1}"]
    est = ball_volumes(spec, p, radii, measure, cfg)
    est.model = ball_volumes(model, mc, radii, measure, replace(cfg, seed=cfg.seed + 1))
    rows = []
    residuals = []
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            q, se = est.ratio(i, j)
            qk, sek = est.model.ratio(i, j)
            sig = math.hypot(se, sek)
            agree = abs(q - qk) / (3 * sig)
            # inequality q <= qk (1 + 3 sigma_rel) expressed as slack
            slack = qk * (1 + 3 * sig / qk) - q
            rows.append({"r": float(radii[i]), "R": float(radii[j]), "ratio": q,
                         "ratio_se": se, "model_ratio": qk, "model_se": sek,
                         "agreement": agree, "slack": slack})
            residuals.append(max(0.0, -slack))
    if est.excluded or est.model.excluded:
        notes.append(f"excluded directions: metric {est.excluded}, model {est.model.excluded}")
    report = Report(
        check="volume",
        metric=spec.label(),
        params={"lambda": float(lam), "measure": str(measure), "radii": radii.tolist(),
                "directions": cfg.directions, "radial": cfg.radial},
        seed=cfg.seed,
        samples=cfg.directions,
        residuals=residuals,
        tolerance=1e-12,
        failures=int(est.excluded),
        notes=notes,
        details={"estimate": est.to_dict(), "s_curvature": svals.tolist(),
                 "max_agreement": max(r["agreement"] for r in rows)},
        rows=rows,
        hypothesis_ok=hyp_ok,
        runtime=time.perf_counter() - t0,
    )
    return est, report

"""Geodesics, parallel frames, Jacobi fields and the distance function.

Geodesics and their parallel frames are integrated jointly (batched over
many initial conditions) with an explicit order-8 Runge-Kutta method with
dense output.  The Jacobi operator K_ab(t) = g_T(E_a, R_T E_b) is sampled
at Chebyshev-Lobatto nodes along each path, interpolated, and the matrix
Jacobi equation A'' = -K A, A(0) = 0, A'(0) = I is solved on the block
orthogonal to T.  Frame convention: column 2n-1 (last) is T, column 2n-2 is
JT, the rest complete a g_T-orthonormal basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.integrate import quad_vec, solve_ivp
from scipy.optimize import brentq

from .bridge import apply_J, orthonormal_frame
from .complex_engine import complex_spray, complex_tensors
from .metric import MetricError
from .partials import derivative_tensor, metric_jet
from .real_engine import jacobi_operator, spray, spray_with_connection

__all__ = [
    "PoleAt",
    "ChartExit",
    "ConjugateReached",
    "NoConvergence",
    "KahlerHypothesisViolated",
    "s_lambda",
    "ct_lambda",
    "comparison_functions",
    "GeodesicControl",
    "GeodesicPath",
    "JacobiSolution",
    "DistanceProbe",
    "unit_vector",
    "integrate_geodesic",
    "parallel_transport",
    "jacobi_matrix",
    "conjugate_point",
    "index_form",
    "distance_hessian",
    "exp_map",
    "distance_bvp",
    "r11_direct",
    "riccati_probe",
]


class PoleAt(ValueError):
    """ct_lambda evaluated at or beyond its pole pi / sqrt(lambda)."""


class ChartExit(RuntimeError):
    """Geodesic left the chart probe region."""


class ConjugateReached(ArithmeticError):
    """Requested radius lies at or beyond the first conjugate point."""


class NoConvergence(RuntimeError):
    """Shooting iteration did not converge."""


class KahlerHypothesisViolated(ValueError):
    """Strong Kahler residual along the path exceeds the gate."""


# ---------------------------------------------------------------------------
# comparison functions


def s_lambda(lam, t):
    """sin(sqrt(lam) t)/sqrt(lam), t, or sinh(sqrt(-lam) t)/sqrt(-lam)."""
    t = np.asarray(t, dtype=float)
    if lam > 0:
        k = math.sqrt(lam)
        return np.sin(k * t) / k
    if lam < 0:
        k = math.sqrt(-lam)
        return np.sinh(k * t) / k
    return t


def ct_lambda(lam, t, allow_pole=False):
    """sqrt(lam) cot(sqrt(lam) t), 1/t, or sqrt(-lam) coth(sqrt(-lam) t).

    For lam > 0 and t >= pi/sqrt(lam) raises :class:`PoleAt`, or returns
    nan there when ``allow_pole``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("ct_lambda needs t > 0")
    if lam > 0:
        k = math.sqrt(lam)
        bad = k * t >= np.pi
        if np.any(bad) and not allow_pole:
            raise PoleAt(f"ct_{lam:g} has a pole at t = {np.pi / k:.12g}")
        with np.errstate(all="ignore"):
            out = k / np.tan(k * t)
        return np.where(bad, np.nan, out)
    if lam < 0:
        k = math.sqrt(-lam)
        return k / np.tanh(k * t)
    return 1.0 / t


def comparison_functions(lam, t):
    """(s_lambda(t), ct_lambda(t))."""
    return s_lambda(lam, t), ct_lambda(lam, t)


# ---------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True)
class GeodesicControl:
    """Integrator and sampling settings.

    ``chart_radius`` bounds |x| along paths (default: 0.95 of the metric's
    domain radius, else 10).  Chebyshev sampling of the Jacobi operator starts
    at ``cheb_min`` nodes and doubles up to ``cheb_max`` until the trailing
    coefficients fall below ``cheb_tol`` relative to the largest.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    chart_radius: float | None = None
    cheb_min: int = 33
    cheb_max: int = 257
    cheb_tol: float = 1e-12
    method: str = "DOP853"

    def radius_for(self, spec):
        r = self.chart_radius if self.chart_radius is not None else 10.0
        if spec.domain_radius is not None:
            r = min(r, 0.95 * spec.domain_radius)
        return r


def unit_vector(spec, x, y):
    """Rescale y to F(x, y) = 1."""
    y = np.asarray(y, dtype=float)
    return y / np.sqrt(spec.G(x, y))[..., None]


@dataclass
class GeodesicPath:
    """A batch of unit-speed geodesics with jointly transported parallel frames.

    State layout per geodesic: x (2n), xdot (2n), E (2n x 2n, row-major with
    columns the frame vectors).  ``kept`` indexes the original batch; paths
    that left the chart were frozen there, dropped, and listed in ``excluded``.
    """

    spec: object
    x0: np.ndarray
    y0: np.ndarray
    L: float
    sol: object
    frame0: np.ndarray
    kept: np.ndarray
    excluded: list
    stats: dict = field(default_factory=dict)
    total: int | None = None

    @property
    def dim(self):
        return self.spec.dim

    @property
    def count(self):
        return self.x0.shape[0]

    def state(self, t):
        """x, T, E at times ``t``; shapes (B, *t.shape, ...)."""
        t = np.asarray(t, dtype=float)
        d = self.dim
        S = self.sol(t.ravel())  # (size, nt)
        S = S.reshape(self.total or self.count, -1, t.size)[self.kept if self.total else slice(None)]
        S = np.moveaxis(S, -1, 1).reshape((self.count,) + t.shape + (S.shape[1],))
        x = S[..., :d]
        T = S[..., d:2 * d]
        E = S[..., 2 * d:].reshape(S.shape[:-1] + (d, d))
        return x, T, E

    def speed_residual(self, t):
        x, T, _ = self.state(t)
        return np.abs(np.sqrt(self.spec.G(x, T)) - 1.0)

    def equation_residual(self, t=None, h=1e-3):
        """|xddot + 2 Ghat(x, xdot)| with xddot from a 6th-order difference of the interpolant.

        The default times are the interior integrator mesh points; between
        them the derivative of the dense output is less accurate than the
        solution itself.
        """
        t = self.sol.ts[1:-1] if t is None else np.asarray(t, dtype=float)
        t = np.clip(t, 3 * h, self.L - 3 * h)
        w = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
        acc = 0.0
        for k, wk in zip(range(-3, 4), w):
            if wk:
                acc = acc + wk * self.state(t + k * h)[1]
        acc = acc / h
        x, T, _ = self.state(t)
        return np.max(np.abs(acc + 2.0 * spray(self.spec, x, T)), axis=-1)

    def frame_drift(self, t):
        """max |E^T g_T E - I| along the paths."""
        x, T, E = self.state(t)
        _, _, g = spray_with_connection(self.spec, x, T)
        gram = np.einsum("...ia,...ij,...jb->...ab", E, g, E)
        return np.max(np.abs(gram - np.eye(self.dim)), axis=(-1, -2))

    def to_csv(self, index=0, samples=101):
        """CSV text with columns t, x1..x2n, xdot1..xdot2n for one geodesic."""
        ts = np.linspace(0.0, self.L, samples)
        x, T, _ = self.state(ts)
        d = self.dim
        head = ["t"] + [f"x{k + 1}" for k in range(d)] + [f"xdot{k + 1}" for k in range(d)]
        lines = [",".join(head)]
        for k, t in enumerate(ts):
            row = [t] + list(x[index, k]) + list(T[index, k])
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def _rhs_factory(spec, B, d, R2, escaped):
    """Geodesic + frame vector field; rows that reach |x|^2 >= R2 are frozen and flagged."""

    def rhs(t, s):
        S = s.reshape(B, -1)
        out = np.zeros_like(S)
        inside = np.sum(S[:, :d] ** 2, axis=1) < R2
        escaped[~inside] = True
        live = ~escaped
        if live.any():
            Sl = S[live]
            x = Sl[:, :d]
            v = Sl[:, d:2 * d]
            E = Sl[:, 2 * d:].reshape(-1, d, d)
            gh, N, _ = spray_with_connection(spec, x, v)
            dE = -np.einsum("bij,bja->bia", N, E)
            out[live] = np.concatenate([v, -2.0 * gh, dE.reshape(len(Sl), -1)], axis=1)
        return out.ravel()

    return rhs


def integrate_geodesic(spec, x0, y0, L, control=None, frame=None, normalize=False):
    """Integrate unit-speed geodesics with a parallel frame on [0, L].

    Parameters
    ----------
    x0, y0 : array_like, shape (2n,) or (B, 2n)
        Initial points and unit velocities (F(y0) = 1 within 1e-6, or pass
        ``normalize=True``).
    frame : ndarray, optional
        Initial frames (B, 2n, 2n); default is the deterministic g-orthonormal
        frame with E_2n = T, E_(2n-1) = JT.

    Returns
    -------
    GeodesicPath
    """
    control = control or GeodesicControl()
    if not L > 0:
        raise ValueError("length L must be positive")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    x0, y0 = np.broadcast_arrays(x0, y0)
    spec.check_domain(x0)
    F = np.sqrt(spec.G(x0, y0))
    if normalize:
        y0 = y0 / F[:, None]
    elif np.any(np.abs(F - 1.0) > 1e-6):
        raise ValueError(f"initial velocity must be unit (F = {F.min():.8g}..{F.max():.8g})")
    else:
        y0 = y0 / F[:, None]
    d = spec.dim
    if frame is None:
        gj = metric_jet(spec, x0, y0, ((0, 2),))
        frame = orthonormal_frame(0.5 * derivative_tensor(gj, 2), y0)
    R2 = control.radius_for(spec) ** 2
    if np.any(np.sum(x0**2, -1) >= R2):
        raise ChartExit("initial point outside the chart probe radius")
    B = len(x0)
    escaped = np.zeros(B, dtype=bool)
    s0 = np.concatenate([x0, y0, frame.reshape(B, -1)], axis=1).ravel()
    sol = solve_ivp(_rhs_factory(spec, B, d, R2, escaped), (0.0, L), s0, method=control.method,
                    rtol=control.rtol, atol=control.atol, dense_output=True)
    if sol.status != 0:
        raise RuntimeError(f"geodesic integration failed: {sol.message}")
    kept = np.flatnonzero(~escaped)
    if len(kept) == 0:
        raise ChartExit("every geodesic left the chart probe region")
    return GeodesicPath(spec=spec, x0=x0[kept], y0=y0[kept], L=float(L), sol=sol.sol,
                        frame0=frame[kept], kept=kept,
                        excluded=[int(k) for k in np.flatnonzero(escaped)],
                        stats={"nfev": int(sol.nfev), "steps": int(len(sol.t) - 1)},
                        total=B)


def parallel_transport(path, X0, t):
    """Parallel transport of X0 (at t=0) along each path, evaluated at times t."""
    X0 = np.asarray(X0, dtype=float)
    coeff = np.linalg.solve(path.frame0, np.broadcast_to(X0, (path.count, path.dim))[..., None])[..., 0]
    _, _, E = path.state(t)
    coeff = coeff.reshape((path.count,) + (1,) * np.ndim(t) + (path.dim,))
    return np.einsum("...ia,...a->...i", E, coeff)


# ---------------------------------------------------------------------------
# Jacobi fields


def _cheb_nodes(L, M):
    s = -np.cos(np.pi * np.arange(M) / (M - 1))
    return s, 0.5 * L * (s + 1.0)


def _frame_curvature(spec, x, T, E):
    """Full 2n x 2n frame matrix K_ab = g_T(E_a, R_T E_b) (symmetrized)."""
    shp = x.shape[:-1]
    d = x.shape[-1]
    Rk, g, _ = jacobi_operator(spec, x.reshape(-1, d), T.reshape(-1, d))
    Ef = E.reshape(-1, d, d)
    K = np.einsum("nia,nij,njk,nkb->nab", Ef, g, Rk, Ef)
    K = 0.5 * (K + np.swapaxes(K, -1, -2))
    return K.reshape(shp + (d, d))


@dataclass
class JacobiSolution:
    """Matrix Jacobi solution A(t) on the T-perp block, batched over geodesics.

    ``K(t)`` is the interpolated full-frame curvature matrix; block indices
    0..2n-2 are the T-perp directions with index 2n-2 the JT direction at t=0.
    """

    path: GeodesicPath
    coef: np.ndarray
    sol: object
    nodes: int
    tail: float

    @property
    def m(self):
        return self.path.dim - 1

    def K_full(self, t):
        t = np.asarray(t, dtype=float)
        s = 2.0 * t / self.path.L - 1.0
        vals = C.chebval(s, self.coef)  # (B, d, d, *t.shape)
        nt = np.ndim(t)
        return np.moveaxis(vals, tuple(range(-nt, 0)), tuple(range(1, 1 + nt))) if nt else vals

    def K(self, t):
        return self.K_full(t)[..., : self.m, : self.m]

    def _AdA(self, t):
        t = np.asarray(t, dtype=float)
        B, m = self.path.count, self.m
        S = self.sol(t.ravel()).reshape(B, 2, m, m, t.size)
        S = np.moveaxis(S, -1, 1).reshape((B,) + t.shape + (2, m, m))
        return S[..., 0, :, :], S[..., 1, :, :]

    def A(self, t):
        return self._AdA(t)[0]

    def dA(self, t):
        return self._AdA(t)[1]

    def det(self, t):
        return np.linalg.det(self.A(t))

    def wronskian(self, t):
        A, dA = self._AdA(t)
        W = np.swapaxes(dA, -1, -2) @ A - np.swapaxes(A, -1, -2) @ dA
        return np.max(np.abs(W), axis=(-1, -2))


def jacobi_matrix(path, control=None):
    """Solve A'' = -K A, A(0) = 0, A'(0) = I along every path of the batch."""
    control = control or GeodesicControl()
    L = path.L
    B, d = path.count, path.dim
    m = d - 1
    M = control.cheb_min
    while True:
        s, t = _cheb_nodes(L, M)
        x, T, E = path.state(t)
        K = _frame_curvature(path.spec, x, T, E)  # (B, M, d, d)
        vals = np.moveaxis(K, 1, 0).reshape(M, -1)
        coef = C.chebfit(s, vals, M - 1)
        scale = max(1.0, float(np.max(np.abs(coef))))
        tail = float(np.max(np.abs(coef[-4:]))) / scale
        if tail < control.cheb_tol or M >= control.cheb_max:
            break
        M = 2 * M - 1
    coef = coef.reshape((M, B, d, d))
    coef = np.moveaxis(coef, 0, -1)  # (B, d, d, M) so chebval broadcasts over leading dims
    coef_t = np.moveaxis(coef, -1, 0)

    def rhs(tt, y):
        Y = y.reshape(B, 2, m, m)
        Kt = C.chebval(2.0 * tt / L - 1.0, coef_t)[..., :m, :m]
        return np.stack([Y[:, 1], -Kt @ Y[:, 0]], axis=1).ravel()

    y0 = np.zeros((B, 2, m, m))
    y0[:, 1] = np.eye(m)
    sol = solve_ivp(rhs, (0.0, L), y0.ravel(), method=control.method,
                    rtol=min(control.rtol, 1e-11), atol=min(control.atol, 1e-13),
                    dense_output=True)
    if sol.status != 0:
        raise RuntimeError(f"Jacobi integration failed: {sol.message}")
    return JacobiSolution(path=path, coef=coef_t, sol=sol.sol, nodes=M, tail=tail)


def conjugate_point(jac, t_max=None, grid=2000):
    """First t* in (0, t_max] with det A(t*) = 0 per geodesic (nan if none).

    Sign-change bracketing on a uniform grid followed by Brent's method to
    1e-12 in t.  Tangential zeros without a sign change are not detected.
    """
    L = jac.path.L if t_max is None else min(t_max, jac.path.L)
    ts = np.linspace(L / grid, L, grid)
    dets = jac.det(ts)  # (B, grid)
    out = np.full(jac.path.count, np.nan)
    for b in range(jac.path.count):
        sg = np.sign(dets[b])
        idx = np.nonzero(sg[1:] * sg[:-1] <= 0)[0]
        if len(idx) == 0:
            continue
        k = idx[0]
        if dets[b, k] == 0:
            out[b] = ts[k]
            continue

        def f(t, b=b):
            return float(np.linalg.det(jac.A(t)[b]))

        out[b] = brentq(f, ts[k], ts[k + 1], xtol=1e-12, rtol=1e-14)
    return out


def index_form(jac, W, dW, t1=None, index=None, epsabs=1e-10):
    """I(W, W) = int_0^t1 |W'|^2 - K(W, W) dt in parallel-frame coordinates.

    ``W(t)`` and ``dW(t)`` return full-frame coordinates with shape (2n,) or
    (B, 2n).  The T-component is dropped (the normal part carries the second
    variation).  Returns one value per geodesic (or the selected ``index``).
    """
    t1 = jac.path.L if t1 is None else t1
    d = jac.path.dim

    def integrand(t):
        w = np.broadcast_to(np.asarray(W(t), dtype=float), (jac.path.count, d)).copy()
        dw = np.broadcast_to(np.asarray(dW(t), dtype=float), (jac.path.count, d)).copy()
        w[:, -1] = 0.0
        dw[:, -1] = 0.0
        K = jac.K_full(t)
        return np.sum(dw * dw, -1) - np.einsum("ba,bac,bc->b", w, K, w)

    val, err = quad_vec(integrand, 0.0, t1, epsabs=epsabs, epsrel=1e-12)
    return val if index is None else val[index]


@dataclass
class DistanceProbe:
    """Hessian of the distance function from p at gamma(r), in the parallel frame."""

    r: float
    H: np.ndarray
    box: np.ndarray
    box_perp: np.ndarray
    HVV: np.ndarray
    HTT: np.ndarray
    HT_row: np.ndarray
    v: np.ndarray
    index_crosscheck: np.ndarray
    condition: np.ndarray


def distance_hessian(jac, r, crosscheck=True):
    """H(r) = A'(r) A(r)^-1 on T-perp, plus Box, Box-perp and H(V, V) at gamma(r).

    V = J(T(r)) is expressed in frame coordinates through g_T; H(T, .) = 0 is
    appended exactly.  With ``crosscheck`` the index form of the boundary
    matched Jacobi fields J_i = A(t) A(r)^-1 e_i is integrated by adaptive
    quadrature and its max deviation from H is reported.
    """
    path = jac.path
    if not 0 < r <= path.L:
        raise ValueError("r must lie in (0, L]")
    tc = conjugate_point(jac, t_max=r)
    if np.any(np.isfinite(tc)):
        raise ConjugateReached(f"conjugate point at t = {np.nanmin(tc):.8g} <= r = {r}")
    A, dA = jac._AdA(r)
    cond = np.linalg.cond(A)
    if np.any(cond > 1e10):
        raise ConjugateReached(f"A(r) ill-conditioned (cond {cond.max():.3g})")
    Ainv = np.linalg.inv(A)
    Hp = dA @ Ainv
    Hp = 0.5 * (Hp + np.swapaxes(Hp, -1, -2))
    B, d, m = path.count, path.dim, jac.m
    H = np.zeros((B, d, d))
    H[:, :m, :m] = Hp
    x, T, E = path.state(r)
    gj = metric_jet(path.spec, x, T, ((0, 2),))
    g = 0.5 * derivative_tensor(gj, 2)
    v = np.einsum("bia,bij,bj->ba", E, g, apply_J(T))
    HVV = np.einsum("na,nab,nb->n", v, H, v)
    HTT = H[:, -1, -1]
    box = np.trace(H, axis1=-2, axis2=-1)
    cross = np.full(B, np.nan)
    if crosscheck:
        def integrand(t):
            At, dAt = jac._AdA(t)
            K = jac.K(t)
            P = np.swapaxes(dAt, -1, -2) @ dAt - np.swapaxes(At, -1, -2) @ K @ At
            return P.ravel()

        P, _ = quad_vec(integrand, 0.0, r, epsabs=1e-11, epsrel=1e-11)
        P = P.reshape(B, m, m)
        Iform = np.swapaxes(Ainv, -1, -2) @ P @ Ainv
        cross = np.max(np.abs(Iform - Hp), axis=(-1, -2))
    return DistanceProbe(r=float(r), H=H, box=box, box_perp=box - HTT - HVV, HVV=HVV,
                         HTT=HTT, HT_row=np.max(np.abs(H[:, -1, :]), -1), v=v,
                         index_crosscheck=cross, condition=cond)


# ---------------------------------------------------------------------------
# exponential map and distance boundary-value problem


def exp_map(spec, p, W, rtol=1e-12, atol=1e-14, chart_radius=None):
    """Endpoints and end velocities of the geodesics t -> exp_p(t W), t in [0, 1].

    ``W`` has shape (B, 2n); returns (x(1), xdot(1)).
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    p = np.asarray(p, dtype=float)
    B, d = W.shape
    P = np.broadcast_to(p, W.shape)

    def rhs(t, s):
        S = s.reshape(B, 2 * d)
        return np.concatenate([S[:, d:], -2.0 * spray(spec, S[:, :d], S[:, d:])], 1).ravel()

    s0 = np.concatenate([P, W], axis=1).ravel()
    try:
        sol = solve_ivp(rhs, (0.0, 1.0), s0, method="DOP853", rtol=rtol, atol=atol)
    except MetricError as exc:
        raise ChartExit(str(exc)) from exc
    if sol.status != 0:
        raise NoConvergence(f"exp map integration failed: {sol.message}")
    S = sol.y[:, -1].reshape(B, 2 * d)
    return S[:, :d], S[:, d:]


def _fd_jacobian(spec, p, w, h=1e-6):
    d = w.shape[-1]
    hs = h * max(1.0, float(np.linalg.norm(w)))
    Ws = np.concatenate([w + hs * np.eye(d), w - hs * np.eye(d)])
    X, _ = exp_map(spec, p, Ws)
    return ((X[:d] - X[d:]) / (2 * hs)).T


def _shoot(spec, p, q, w, tol, max_iter):
    for _ in range(max_iter):
        X, V = exp_map(spec, p, w[None])
        F = X[0] - q
        if np.linalg.norm(F) < tol:
            return w, V[0], _fd_jacobian(spec, p, w)
        Jm = _fd_jacobian(spec, p, w)
        w = w - np.linalg.solve(Jm, F)
    raise NoConvergence("Newton shooting did not converge")


def distance_bvp(spec, p, q, tol=1e-11, max_iter=30, certify=False):
    """Solve exp_p(r y0) = q for the distance r and unit initial velocity y0.

    Newton iteration on the initial velocity with a finite-difference
    Jacobian, started from the chart straight line and restarted from
    rescaled guesses if needed.  With ``certify`` the absence of conjugate
    points on [0, r] is verified along the found geodesic.

    Returns
    -------
    r : float
    y0 : ndarray
        Unit initial velocity.
    info : dict
        Residual, end velocity and the shooting Jacobian.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    spec.check_domain(np.stack([p, q]))
    if np.allclose(p, q):
        raise ValueError("p and q coincide")
    last = None
    for scale in (1.0, 0.7, 1.4, 0.5):
        try:
            w, vend, Jm = _shoot(spec, p, q, scale * (q - p), tol, max_iter)
            break
        except (NoConvergence, ChartExit, np.linalg.LinAlgError, MetricError) as exc:
            last = exc
    else:
        raise NoConvergence(f"multi-start shooting exhausted: {last}")
    r = float(np.sqrt(spec.G(p, w)))
    X, _ = exp_map(spec, p, w[None])
    info = {"residual": float(np.linalg.norm(X[0] - q)), "end_velocity": vend / r,
            "jacobian": Jm, "w": w}
    if certify:
        path = integrate_geodesic(spec, p, w / r, r)
        tc = conjugate_point(jacobi_matrix(path))
        if np.isfinite(tc[0]):
            raise ConjugateReached(f"conjugate point at {tc[0]:.8g} before the target")
    return r, w / r, info


def _chord_batch(spec, p, Q, w0, Jinv, tol, max_iter=40):
    """Chord-method shooting for many targets sharing one Jacobian inverse."""
    w = w0.copy()
    for _ in range(max_iter):
        X, _ = exp_map(spec, p, w)
        F = X - Q
        res = np.linalg.norm(F, axis=1)
        if np.all(res < tol):
            return w
        w = w - F @ Jinv.T
    raise NoConvergence(f"chord iteration stalled at residual {res.max():.3g}")


def _distance_derivatives(spec, p, q, w_c, Jm, h, tol):
    d = q.shape[0]
    Jinv = np.linalg.inv(Jm)
    offs = [np.zeros(d)]
    for a in range(d):
        for sgn in (1, -1):
            e = np.zeros(d)
            e[a] = sgn
            offs.append(e)
    pairs = []
    for a in range(d):
        for b in range(a + 1, d):
            for sa in (1, -1):
                for sb in (1, -1):
                    e = np.zeros(d)
                    e[a] = sa
                    e[b] = sb
                    offs.append(e)
                    pairs.append((a, b, sa, sb))
    offs = np.array(offs) * h
    Q = q + offs
    w0 = w_c + offs @ Jinv.T
    w = _chord_batch(spec, p, Q, w0, Jinv, tol)
    r = np.sqrt(spec.G(np.broadcast_to(p, w.shape), w))
    r0 = r[0]
    rp = r[1:1 + 2 * d:2]
    rm = r[2:2 + 2 * d:2]
    grad = (rp - rm) / (2 * h)
    hess = np.diag((rp - 2 * r0 + rm) / h**2)
    rest = r[1 + 2 * d:]
    k = 0
    acc = {}
    for (a, b, sa, sb) in pairs:
        acc.setdefault((a, b), 0.0)
        acc[(a, b)] += sa * sb * rest[k]
        k += 1
    for (a, b), val in acc.items():
        hess[a, b] = hess[b, a] = val / (4 * h**2)
    return r0, grad, hess


def r11_direct(spec, p, q, rel_step=1e-3):
    """r_11 = T_o^a T_o^b d^2 r/dz^a dz^b - 2 G^a(q, T_o) dr/dz^a by distance-function differences.

    The distance r(x) = d(p, x) is sampled by shooting around q; gradient and
    Hessian use central differences with step h = r * rel_step and two-level
    Richardson extrapolation.  Returns ``(r11, info)``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    r, y0, info = distance_bvp(spec, p, q)
    w_c = info["w"]
    Jm = info["jacobian"]
    h = r * rel_step
    tol = 1e-13 * max(1.0, float(np.max(np.abs(q))))
    _, g1, H1 = _distance_derivatives(spec, p, q, w_c, Jm, h, tol)
    _, g2, H2 = _distance_derivatives(spec, p, q, w_c, Jm, h / 2, tol)
    grad = (4 * g2 - g1) / 3
    hess = (4 * H2 - H1) / 3
    n = spec.n
    dz = 0.5 * (grad[:n] - 1j * grad[n:])
    dzz = 0.25 * (hess[:n, :n] - hess[n:, n:] - 1j * (hess[n:, :n] + hess[:n, n:]))
    T = info["end_velocity"]
    To = T[:n] + 1j * T[n:]
    Gc = complex_spray(spec, q[None], T[None])[0]
    r11 = To @ dzz @ To - 2.0 * Gc @ dz
    return complex(r11), {"r": r, "y0": y0, "T": T, "grad": grad, "hess": hess,
                          "richardson_delta": float(np.max(np.abs(H2 - H1)))}


# ---------------------------------------------------------------------------
# Riccati probe


def riccati_probe(jac, lam, times=None, kahler_gate=1e-8, fd_step=1e-4, small_t=0.04):
    """Profile of f(t) = H(r)(V, V)/4 along the paths against the Riccati bounds.

    Checks 4 f^2 + f' <= -H(T_o)/4 and, where H >= 4 lam holds, f <= ct_lam(2t)/2;
    also extrapolates t f(t) to t -> 0.  Raises
    :class:`KahlerHypothesisViolated` if the strong Kahler residual exceeds
    ``kahler_gate`` anywhere on the sampled path.

    Returns a dict with per-geodesic rows and summary residuals.
    """
    path = jac.path
    spec = path.spec
    L = path.L
    if times is None:
        top = L - 1e-3
        if lam > 0:
            top = min(top, 0.5 * np.pi / math.sqrt(lam) - 0.05)
        times = np.linspace(0.05, top, 24)
    times = np.asarray(times, dtype=float)
    B = path.count

    def f_of(t):
        A, dA = jac._AdA(t)
        H = dA @ np.linalg.inv(A)
        H = 0.5 * (H + np.swapaxes(H, -1, -2))
        x, T, E = path.state(t)
        gj = metric_jet(spec, x, T, ((0, 2),))
        g = 0.5 * derivative_tensor(gj, 2)
        v = np.einsum("...ia,...ij,...j->...a", E, g, apply_J(T))[..., :jac.m]
        return 0.25 * np.einsum("...a,...ab,...b->...", v, H, v)

    f = f_of(times)
    fp = (f_of(times - 2 * fd_step) - 8 * f_of(times - fd_step)
          + 8 * f_of(times + fd_step) - f_of(times + 2 * fd_step)) / (12 * fd_step)
    x, T, _ = path.state(times)
    d = spec.dim
    ct = complex_tensors(spec, x.reshape(-1, d), T.reshape(-1, d), curvature=True)
    Ho = ct.H.real.reshape(B, -1)
    strong = np.max(np.abs(ct.Gam - np.swapaxes(ct.Gam, -1, -2)))
    if strong > kahler_gate:
        raise KahlerHypothesisViolated(f"strong Kahler residual {strong:.3g} > {kahler_gate:g}")
    lhs = 4 * f**2 + fp
    bound = -0.25 * Ho
    slack = bound - lhs
    model = 0.5 * ct_lambda(lam, 2 * times, allow_pole=True)
    holds = np.all(Ho >= 4 * lam - 1e-9, axis=1)
    comp_slack = np.where(holds[:, None], model - f, np.inf)
    ts = small_t / 2.0 ** np.arange(4)
    tf = ts * f_of(ts)  # (B, 4)
    # polynomial extrapolation of t f(t) to t = 0 (t f = 1/4 + O(t^2))
    lim = np.array([np.polyval(np.polyfit(ts**2, tf[b], 2), 0.0) for b in range(B)])
    return {
        "t": times,
        "f": f,
        "fprime": fp,
        "H": Ho,
        "lhs": lhs,
        "bound": bound,
        "slack": slack,
        "model": model,
        "comparison_slack": comp_slack,
        "tf_limit": lim,
        "strong_kahler": float(strong),
        "min_slack": float(np.min(slack)),
        "min_comparison_slack": float(np.min(comp_slack)),
    }

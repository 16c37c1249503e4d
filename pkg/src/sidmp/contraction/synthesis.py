"""Numerical construction of transverse contraction metrics.

A singular metric ``M_s = int_0^inf V^T Q V dt`` is built from the
fundamental matrix ``V`` of ``dv/dt = (A - f f^T (A + A^T) / f^T f) v``
along the flow. It is then completed to a full-rank metric through the
differential coordinates ``dz = Theta_x dx`` with
``Theta_x = [f^T / |f|^2 ; Ms~^{1/2} Pi]`` and the block metric
``M_z = [[1, M21^T], [M21, M22]]``.

All integrals over ``[t, inf)`` are evaluated by backward recursions on the
fixed RK4 grid: if ``P_k`` propagates the relevant linear system over one
step, ``I(t_k) = P_k^T I(t_{k+1}) P_k + (h/2) (G_k + P_k^T G_{k+1} P_k)``
is the composite trapezoid rule for ``int P^T G P``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import MetricBuildError, ParameterError
from .certify import transverse_basis
from .metrics import Metric


def default_weight(x, fx):
    """``Q = I - f f^T / |f|^2``: PSD, rank n-1, annihilates f."""
    fx = np.asarray(fx, dtype=float)
    n = fx.shape[-1]
    ff = fx[..., :, None] * fx[..., None, :]
    return np.eye(n) - ff / np.sum(fx * fx, axis=-1)[..., None, None]


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _t(a):
    return np.swapaxes(a, -1, -2)


def _linear_step(a0, am, a1, h):
    """RK4 transition matrix of ``dP/dt = A(t) P`` over one step, from ``I``."""
    eye = np.broadcast_to(np.eye(a0.shape[-1]), a0.shape)
    k1 = a0
    k2 = am @ (eye + 0.5 * h * k1)
    k3 = am @ (eye + 0.5 * h * k2)
    k4 = a1 @ (eye + h * k3)
    return eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _flow_step(vf, x, h):
    k1 = vf.func(x, 0.0)
    k2 = vf.func(x + 0.5 * h * k1, 0.0)
    k3 = vf.func(x + 0.5 * h * k2, 0.0)
    k4 = vf.func(x + h * k3, 0.0)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _projected_jacobian(a, fx):
    """``A_v = A - f f^T (A + A^T) / f^T f``."""
    ff = fx[..., :, None] * fx[..., None, :]
    return a - (ff @ (a + _t(a))) / np.sum(fx * fx, axis=-1)[..., None, None]


def _min_rotation(a, b):
    """Rotation taking unit ``a`` to unit ``b`` within their common plane (batched)."""
    w = b[..., :, None] * a[..., None, :] - a[..., :, None] * b[..., None, :]
    c = np.sum(a * b, axis=-1)[..., None, None]
    return np.eye(a.shape[-1]) + w + (w @ w) / (1.0 + c)


@dataclass(frozen=True)
class SingularMetricBuild:
    """Singular metric at a set of base points, with the flow data behind it.

    Arrays indexed ``[k, i]`` run over the time grid ``times[k]`` and the
    base points ``points[i]``. ``ms_path[k, i]`` is ``M_s`` at the state
    reached from ``points[i]`` after ``times[k]``.
    """

    points: np.ndarray
    rate: float
    step: float
    horizon: float
    total_horizon: float
    tail_tolerance: float
    tail_bound: np.ndarray
    ms: np.ndarray
    residual: np.ndarray
    null_ratio: np.ndarray
    times: np.ndarray
    states: np.ndarray
    fields: np.ndarray
    jacobians: np.ndarray
    ms_path: np.ndarray
    prop_a: np.ndarray
    weight: Callable = field(default=default_weight, repr=False, compare=False)
    vector_field: object = field(default=None, repr=False, compare=False)

    @property
    def rank(self):
        """Numerical rank of ``M_s`` at each base point (relative threshold 1e-6)."""
        ev = np.linalg.eigvalsh(self.ms)
        return np.sum(ev > 1e-6 * np.trace(self.ms, axis1=-2, axis2=-1)[:, None], axis=-1)


def build_singular_metric(vf, points, weight: Optional[Callable] = None,
                          rate: Optional[float] = None, step: float = 2e-3,
                          tail_tol: float = 1e-8, max_horizon: float = 200.0,
                          extension: Optional[float] = None) -> SingularMetricBuild:
    """Build ``M_s`` at each base point by integrating along the flow.

    The quadrature is truncated once ``|Q V| <= tail_tol`` at every base
    point; the neglected tail is at most ``|Q V|^2 |Q| / (2 rate)``. The flow
    is then continued for ``extension`` seconds (default ``2 ln(1/tail_tol) /
    rate``) so that the full-metric integrals can be formed from the same
    run. ``rate`` is the transverse rate used for the tail estimates; when
    omitted it is the sampled rate at the base points under ``M = I``.
    """
    if vf.switching is not None or not vf.autonomous:
        raise ParameterError("metric synthesis needs an autonomous, unswitched field")
    if step <= 0 or tail_tol <= 0:
        raise ParameterError("step and tail_tol must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, n = pts.shape
    if n < 2:
        raise ParameterError("transverse metrics need dimension >= 2")
    weight = weight or default_weight
    if rate is None:
        from .certify import transverse_margins
        rate = float(-np.max(transverse_margins(vf, Metric.identity(n), pts)[0]) / 2.0)
    if rate <= 0:
        raise MetricBuildError(f"non-positive transverse rate {rate:.3g} at the base points")
    if extension is None:
        extension = 2.0 * np.log(1.0 / tail_tol) / rate

    h = float(step)
    x = pts.copy()
    f0 = vf(x)
    if np.any(np.linalg.norm(f0, axis=-1) == 0):
        raise MetricBuildError("base point is an equilibrium")
    xs, fs, js = [x], [f0], [vf.jacobian(x)]
    pa_list, pv_list = [], []
    phi_v = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    h_s, target, k = None, max_horizon, 0
    qn = np.inf
    while k * h < target - 1e-12:
        xm = _flow_step(vf, xs[-1], 0.5 * h)
        x1 = _flow_step(vf, xm, 0.5 * h)
        fm, f1 = vf(xm), vf(x1)
        am, a1 = vf.jacobian(xm), vf.jacobian(x1)
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(a1))):
            raise MetricBuildError(f"flow left the finite domain after t={k * h:.4g}")
        a0, f_0 = js[-1], fs[-1]
        pa_list.append(_linear_step(a0, am, a1, h))
        pv = _linear_step(_projected_jacobian(a0, f_0), _projected_jacobian(am, fm),
                          _projected_jacobian(a1, f1), h)
        pv_list.append(pv)
        xs.append(x1)
        fs.append(f1)
        js.append(a1)
        k += 1
        if h_s is None:
            phi_v = pv @ phi_v
            qn = float(np.max(np.linalg.norm(weight(x1, f1) @ phi_v, ord=2, axis=(-2, -1))))
            if qn <= tail_tol:
                h_s = k * h
                target = h_s + extension
            elif k * h >= max_horizon:
                raise MetricBuildError(
                    f"|Q V| = {qn:.3g} after {max_horizon:g} s (tolerance {tail_tol:g}); "
                    "the flow does not look transverse contracting from these points")

    states, fields_, jacs = np.stack(xs), np.stack(fs), np.stack(js)
    pa, pv = np.stack(pa_list), np.stack(pv_list)
    q = weight(states, fields_)
    n_steps = len(pv)
    ms_path = np.empty_like(q)
    # tail estimate as terminal value keeps M_s positive on the range of Q
    ms_path[-1] = q[-1] / (2.0 * rate)
    for j in range(n_steps - 1, -1, -1):
        p = pv[j]
        ms_path[j] = _sym(_t(p) @ ms_path[j + 1] @ p + 0.5 * h * (q[j] + _t(p) @ q[j + 1] @ p))
    ms0 = ms_path[0]
    mf = np.einsum("kij,kj->ki", ms0, f0)
    residual = np.linalg.norm(mf, axis=-1) / (
        np.linalg.norm(ms0, ord=2, axis=(-2, -1)) * np.linalg.norm(f0, axis=-1))
    ev = np.linalg.eigvalsh(ms0)
    null_ratio = ev[:, 0] / np.trace(ms0, axis1=-2, axis2=-1)
    q_norm = float(np.max(np.linalg.norm(q[0], ord=2, axis=(-2, -1))))
    tail = np.full(m, qn ** 2 * q_norm / (2.0 * rate))
    return SingularMetricBuild(
        points=pts, rate=float(rate), step=h, horizon=float(h_s),
        total_horizon=float(n_steps * h), tail_tolerance=tail_tol, tail_bound=tail,
        ms=ms0, residual=residual, null_ratio=null_ratio,
        times=h * np.arange(n_steps + 1), states=states, fields=fields_, jacobians=jacs,
        ms_path=ms_path, prop_a=pa, weight=weight, vector_field=vf,
    )


@dataclass(frozen=True)
class FullMetricBuild:
    """Full-rank metric ``M = Theta^T Theta`` at the base points.

    ``fs_eigs[i]`` are the eigenvalues (descending) of the symmetric part of
    the generalized Jacobian ``F = (Theta A + dTheta/dt) Theta^{-1}``; the
    construction aims for one zero eigenvalue (along the flow) and the rest
    negative.
    """

    points: np.ndarray
    r: float
    q_scale: float
    theta: np.ndarray
    metric: np.ndarray
    theta_x: np.ndarray
    m21: np.ndarray
    m22: np.ndarray
    generalized_jacobian: np.ndarray
    fs_eigs: np.ndarray
    singular: SingularMetricBuild = field(repr=False, compare=False)

    def to_metric(self, name="synthesized") -> Metric:
        """Metric that looks up base points and rebuilds elsewhere (slow)."""
        cache = {tuple(p): (t, mm) for p, t, mm in zip(self.points, self.theta, self.metric)}
        sm = self.singular

        def lookup(x):
            key = tuple(np.asarray(x, dtype=float))
            if key not in cache:
                single = build_singular_metric(
                    sm.vector_field, [key], weight=sm.weight, rate=sm.rate, step=sm.step,
                    tail_tol=sm.tail_tolerance, extension=sm.total_horizon - sm.horizon)
                fb = build_full_metric(single, r=self.r)
                cache[key] = (fb.theta[0], fb.metric[0])
            return cache[key]

        return Metric(lambda x: lookup(x)[1], lambda x: lookup(x)[0], name=name)

    def write_eigen_report(self, path):
        """CSV with one row per base point: coordinates then F_s eigenvalues."""
        n = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x_{i}" for i in range(n)] + [f"lambda_{i + 1}" for i in range(n)])
            for p, ev in zip(self.points, self.fs_eigs):
                w.writerow([repr(float(v)) for v in p] + [repr(float(v)) for v in ev])


def _transported_frames(fields_):
    """Orthonormal complements of ``f`` moved along the flow by minimal rotations."""
    unit = fields_ / np.linalg.norm(fields_, axis=-1, keepdims=True)
    frames = np.empty(fields_.shape[:-1] + (fields_.shape[-1] - 1, fields_.shape[-1]))
    frames[0] = _t(transverse_basis(unit[0]))
    for k in range(len(unit) - 1):
        frames[k + 1] = frames[k] @ _t(_min_rotation(unit[k], unit[k + 1]))
    return frames


def build_full_metric(sm: SingularMetricBuild, r: Optional[float] = None,
                      max_doublings: int = 60) -> FullMetricBuild:
    """Complete ``M_s`` to a full-rank metric whose generalized Jacobian has
    symmetric part with one zero and ``n - 1`` negative eigenvalues.

    ``r`` must satisfy ``0 <= r < rate`` (default ``rate / 2``). The weight
    in the ``M22`` integral is ``c I``; ``c`` is doubled until
    ``M22 > M21 M21^T`` at the base point.
    """
    lam = sm.rate
    r = 0.5 * lam if r is None else float(r)
    if not 0.0 <= r < lam:
        raise ParameterError(f"need 0 <= r < rate = {lam:.6g}, got r = {r}")
    h = sm.step
    need = np.log(1.0 / sm.tail_tolerance) * (1.0 / lam + 1.0 / (2.0 * (lam - r)))
    if sm.total_horizon - sm.horizon < need * (1.0 - 1e-9):
        raise MetricBuildError(
            f"flow run too short for r={r:g}: need {need:.3g} s beyond the singular horizon, "
            f"have {sm.total_horizon - sm.horizon:.3g} s (raise 'extension')")
    f, a, pa = sm.fields, sm.jacobians, sm.prop_a
    n = f.shape[-1]

    frames = _transported_frames(f)
    mt = _sym(frames @ sm.ms_path @ _t(frames))
    w, v = np.linalg.eigh(mt)
    if np.any(w <= 0):
        raise MetricBuildError("reduced singular metric lost positive definiteness along the flow")
    root = (v * np.sqrt(w)[..., None, :]) @ _t(v)
    theta_x = np.concatenate(
        [(f / np.sum(f * f, axis=-1, keepdims=True))[..., None, :], root @ frames], axis=-2)
    theta_x_inv = np.linalg.inv(theta_x)

    # one-step transition of dz, upper block triangular by construction
    z = theta_x[1:] @ pa @ theta_x_inv[:-1]
    z12, u2 = z[..., 0, 1:], z[..., 1:, 1:]
    n_steps = len(pa)
    m21 = np.zeros(f.shape[:-1] + (n - 1,))
    for k in range(n_steps - 1, -1, -1):
        m21[k] = z12[k] + np.einsum("mi,mij->mj", m21[k + 1], u2[k])

    theta_x_dot = np.gradient(theta_x, h, axis=0, edge_order=2)
    a_z = (theta_x @ a + theta_x_dot) @ theta_x_inv
    a12 = a_z[..., 0, 1:]
    g = m21[..., :, None] * a12[..., None, :]
    g = g + _t(g)

    growth = np.exp(2.0 * r * h)
    eye = np.eye(n - 1)
    fixed = np.zeros_like(g[-1])
    unit = np.zeros_like(g[-1])
    keep_fixed, keep_unit = [None] * 3, [None] * 3
    for k in range(n_steps - 1, -1, -1):
        u = u2[k]
        fixed = growth * _t(u) @ fixed @ u + 0.5 * h * (g[k] + growth * _t(u) @ g[k + 1] @ u)
        unit = growth * _t(u) @ unit @ u + 0.5 * h * (eye + growth * _t(u) @ u)
        if k < 3:
            keep_fixed[k], keep_unit[k] = _sym(fixed), _sym(unit)

    outer = [m21[k][..., :, None] * m21[k][..., None, :] for k in range(3)]
    c = 1.0
    for _ in range(max_doublings):
        if all(np.all(np.linalg.eigvalsh(keep_fixed[k] + c * keep_unit[k] - outer[k]) > 0)
               for k in range(3)):
            break
        c *= 2.0
    else:
        raise MetricBuildError("M22 > M21 M21^T not reached by scaling the weight")

    thetas, m22s = [], []
    for k in range(3):
        m22 = keep_fixed[k] + c * keep_unit[k]
        mz = np.empty(f.shape[1:2] + (n, n))
        mz[:, 0, 0] = 1.0
        mz[:, 0, 1:] = m21[k]
        mz[:, 1:, 0] = m21[k]
        mz[:, 1:, 1:] = m22
        thetas.append(_t(np.linalg.cholesky(mz)) @ theta_x[k])
        m22s.append(m22)
    theta0 = thetas[0]
    theta_dot = (-3.0 * thetas[0] + 4.0 * thetas[1] - thetas[2]) / (2.0 * h)
    gen = (theta0 @ a[0] + theta_dot) @ np.linalg.inv(theta0)
    eigs = np.linalg.eigvalsh(_sym(gen))[:, ::-1]
    return FullMetricBuild(
        points=sm.points, r=r, q_scale=c, theta=theta0, metric=_t(theta0) @ theta0,
        theta_x=theta_x[0], m21=m21[0], m22=m22s[0], generalized_jacobian=gen,
        fs_eigs=eigs, singular=sm,
    )

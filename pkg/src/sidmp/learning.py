"""Least-squares fitting of forcing-function weights from demonstrations."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import GaussianForcing, TransformationSystem, VectorField, VonMisesForcing
from .errors import ConditioningError, ConfigError, DimensionError, ParameterError
from .simulate import IntegratorConfig, integrate


def _as_columns(a, n_rows, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] != n_rows:
        raise DimensionError(f"{name} must have {n_rows} rows, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class Demonstration:
    """Sampled output ``y(t)`` with derivatives and the DMP constants behind it.

    Missing ``yd``/``ydd`` are differentiated numerically (second-order
    central differences, one-sided at the ends). ``goal`` may be constant or
    one row per sample. With ``time_scaled=True`` the targets follow the
    ``tau^2 y'' = k (g - y) - b tau y' + f`` convention.
    """

    t: np.ndarray
    y: np.ndarray
    yd: Optional[np.ndarray] = None
    ydd: Optional[np.ndarray] = None
    k: float = 1.0
    b: float = 1.0
    goal: object = 0.0
    tau: float = 1.0
    time_scaled: bool = False

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
            raise ParameterError("time grid must be one-dimensional and strictly increasing")
        object.__setattr__(self, "t", t)
        y = _as_columns(self.y, t.size, "y")
        object.__setattr__(self, "y", y)
        for name, src in (("yd", "y"), ("ydd", "yd")):
            val = getattr(self, name)
            if val is None:
                if t.size < 3:
                    raise ParameterError(f"{name} missing and too few samples to differentiate")
                val = np.gradient(getattr(self, src), t, axis=0, edge_order=2)
            object.__setattr__(self, name, _as_columns(val, t.size, name))
        for name in ("k", "b", "tau"):
            if not float(getattr(self, name)) > 0:
                raise ParameterError(f"{name} must be positive")

    @property
    def n_out(self):
        return self.y.shape[1]

    @classmethod
    def from_csv(cls, path, k, b, goal, tau=1.0, time_scaled=False,
                 y_cols: Optional[Sequence[str]] = None,
                 yd_cols: Optional[Sequence[str]] = None,
                 ydd_cols: Optional[Sequence[str]] = None):
        """Read ``t,y,ydot[,yddot]`` columns (``y_i``, ``ydot_i``... per output).

        Explicit column lists override the name patterns, so an emitted
        trajectory CSV (``state_i`` columns) can be read back.
        """
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or not rows[0] or rows[0][0] != "t":
            raise ConfigError("expected a header starting with 't'", where=f"{path}:1")
        header = rows[0]
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        except ValueError as exc:
            raise ConfigError(f"non-numeric value ({exc})", where=str(path)) from None
        if data.ndim != 2 or data.shape[0] == 0:
            raise ConfigError("no data rows", where=str(path))

        def pick(cols, stem):
            if cols is None:
                pat = re.compile(rf"^{stem}(_\d+)?$")
                cols = [h for h in header if pat.match(h)]
            missing = [c for c in cols if c not in header]
            if missing:
                raise ConfigError(f"missing columns {missing}", where=f"{path}:1")
            return data[:, [header.index(c) for c in cols]] if cols else None

        y = pick(y_cols, "y")
        if y is None:
            raise ConfigError("no 'y' columns", where=f"{path}:1")
        return cls(data[:, 0], y, pick(yd_cols, "ydot"), pick(ydd_cols, "yddot"),
                   k=k, b=b, goal=goal, tau=tau, time_scaled=time_scaled)

    def to_csv(self, path, derivatives=True):
        m = self.n_out
        cols = [f"y_{i}" for i in range(m)]
        blocks = [self.y]
        if derivatives:
            cols += [f"ydot_{i}" for i in range(m)] + [f"yddot_{i}" for i in range(m)]
            blocks += [self.yd, self.ydd]
        table = np.hstack(blocks)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + cols)
            for ti, row in zip(self.t, table):
                w.writerow([repr(float(ti))] + [repr(float(v)) for v in row])


def compute_target_forcing(demo: Demonstration):
    """``f* = tau y'' - k (g - y) + b y'`` per sample (time-scaled variant with tau^2)."""
    g = np.broadcast_to(np.asarray(demo.goal, dtype=float), demo.y.shape)
    if demo.time_scaled:
        return demo.tau ** 2 * demo.ydd - demo.k * (g - demo.y) + demo.b * demo.tau * demo.yd
    return demo.tau * demo.ydd - demo.k * (g - demo.y) + demo.b * demo.yd


def design_matrix(basis, phase):
    """Linear map from flattened weights to forcing values along a phase rollout."""
    phase = np.asarray(phase, dtype=float)
    if isinstance(basis, GaussianForcing):
        x = phase.reshape(-1) if phase.ndim <= 1 or phase.shape[-1] != 1 else phase[:, 0]
        return basis.normalized(x) * x[:, None]
    if isinstance(basis, VonMisesForcing):
        if phase.ndim != 2 or phase.shape[1] != 2:
            raise DimensionError("von Mises fitting needs a planar phase rollout (T, 2)")
        psi = basis.normalized(phase)
        return (psi[:, :, None] * phase[:, None, :]).reshape(phase.shape[0], -1)
    raise ParameterError(f"unsupported basis {type(basis).__name__}")


@dataclass(frozen=True)
class FitResult:
    weights: np.ndarray
    rmse: float
    baseline_rmse: float
    ridge: float
    rank: int
    forcing: object


def fit_weights(targets, phase, basis, ridge: Optional[float] = None) -> FitResult:
    """Minimize ``sum |f* - f_w(x)|^2 + ridge |w|^2`` over all basis weights jointly.

    ``ridge=None`` uses ``1e-10 * trace(D^T D) / p``; ``ridge=0`` is plain
    least squares and raises :class:`ConditioningError` when the design is
    rank deficient. Weight shapes follow the basis: ``(p,)`` or ``(p, m)``
    for Gaussian, ``(p, 2)`` or ``(p, m, 2)`` for von Mises.
    """
    d = design_matrix(basis, phase)
    f = np.asarray(targets, dtype=float)
    squeeze = f.ndim == 1
    f2 = f[:, None] if squeeze else f
    if f2.shape[0] != d.shape[0]:
        raise DimensionError(f"{f2.shape[0]} targets for {d.shape[0]} phase samples")
    p = d.shape[1]
    rank = int(np.linalg.matrix_rank(d))
    if ridge is None:
        gram = d.T @ d
        ridge = 1e-10 * float(np.trace(gram)) / p
    if ridge < 0:
        raise ParameterError("ridge must be nonnegative")
    if ridge == 0:
        if rank < p:
            raise ConditioningError(
                f"design matrix has rank {rank} < {p} weights; add a ridge term")
        w = np.linalg.lstsq(d, f2, rcond=None)[0]
    else:
        w = np.linalg.solve(d.T @ d + ridge * np.eye(p), d.T @ f2)
    resid = f2 - d @ w
    rmse = float(np.sqrt(np.mean(resid ** 2)))
    base = float(np.sqrt(np.mean(f2 ** 2)))
    n_out = f2.shape[1]
    if isinstance(basis, VonMisesForcing):
        w = w.reshape(basis.n_basis, 2, n_out).transpose(0, 2, 1)
        w = w[:, 0, :] if squeeze else w
    else:
        w = w[:, 0] if squeeze else w
    return FitResult(w, rmse, base, float(ridge), rank, basis.with_weights(w))


def weights_to_config(basis) -> dict:
    """Forcing description in the scenario config format."""
    return {"kind": basis.kind, "centers": [float(c) for c in basis.centers],
            "width": float(basis.width), "weights": np.asarray(basis.weights).tolist()}


def demonstration_from_system(transform: TransformationSystem, canonical, x0, y0,
                              duration, step=1e-3, yd0=None, reference=None):
    """Roll out a transformation system driven by a canonical system.

    Returns ``(demo, phase)``: the demonstration uses the exact ``y''`` from
    the field, so the target forcing reproduces the forcing to rounding.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    m, nx = y0.size, x0.size
    v0 = np.zeros(m) if yd0 is None else np.atleast_1d(yd0) * (
        transform.tau if transform.time_scaled else 1.0)
    r = np.zeros(max(m, 1)) if reference is None else np.atleast_1d(reference)

    def parts(z):
        y, v, x = z[..., :m], z[..., m:2 * m], z[..., 2 * m:]
        xdot = canonical.rhs(x)
        dy, dv = transform.rhs(y, v, x, xdot, r)
        return dy, dv, xdot

    vf = VectorField(2 * m + nx, lambda z, t=0.0: np.concatenate(parts(z), axis=-1),
                     name="demo-system")
    traj = integrate(vf, np.concatenate([y0, v0, x0]), IntegratorConfig(step, duration))
    dy, dv, _ = parts(traj.x)
    scale = transform.tau if transform.time_scaled else 1.0
    x = traj.x[:, 2 * m:]
    goal = np.broadcast_to(transform.goal_at(x, r), (traj.t.size, m))
    demo = Demonstration(traj.t, traj.x[:, :m], dy, dv / scale, k=float(transform.k),
                         b=float(transform.b), goal=np.array(goal), tau=transform.tau,
                         time_scaled=transform.time_scaled)
    return demo, (x[:, 0] if nx == 1 else x)

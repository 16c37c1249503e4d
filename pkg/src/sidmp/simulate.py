"""Fixed-step RK4 integration, event logging and trajectory measurements."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import VectorField
from .errors import DivergenceError, NotPeriodicError, ParameterError, SidmpError

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# disturbances


@dataclass(frozen=True)
class ConstantDisturbance:
    value: np.ndarray
    piecewise_constant = True

    def __call__(self, t):
        return np.asarray(self.value, dtype=float)

    @property
    def sup_norm(self):
        v = np.asarray(self.value, dtype=float)
        return float(np.max(np.linalg.norm(v, axis=-1)))


@dataclass(frozen=True)
class SinusoidalDisturbance:
    amplitude: np.ndarray
    frequency: float
    phase: float = 0.0
    piecewise_constant = False

    def __call__(self, t):
        return np.asarray(self.amplitude, dtype=float) * np.sin(
            2 * np.pi * self.frequency * t + self.phase)

    @property
    def sup_norm(self):
        a = np.asarray(self.amplitude, dtype=float)
        return float(np.max(np.linalg.norm(a, axis=-1)))


class RandomPiecewiseDisturbance:
    """Seeded piecewise-constant disturbance with ``|w(t)| = wbar`` on every piece.

    Each piece lasts ``hold`` seconds and points in a uniformly random
    direction. ``batch`` independent realizations are stacked on the leading
    axis, all drawn from the single ``seed``.
    """

    piecewise_constant = True

    def __init__(self, wbar, dim, hold, duration, seed=0, batch=None):
        if wbar < 0 or hold <= 0:
            raise ParameterError("need wbar >= 0 and hold > 0")
        rng = np.random.default_rng(seed)
        n_pieces = int(np.ceil(duration / hold)) + 2
        shape = (n_pieces,) if batch is None else (n_pieces, batch)
        d = rng.standard_normal(shape + (dim,))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        self.values = wbar * d
        self.hold = float(hold)
        self.wbar = float(wbar)

    def __call__(self, t):
        idx = min(int(np.floor(t / self.hold)), self.values.shape[0] - 1)
        return self.values[max(idx, 0)]

    @property
    def sup_norm(self):
        return float(np.max(np.linalg.norm(self.values, axis=-1)))


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step settings. ``disturbance`` is added to the field output."""

    step: float = 1e-3
    duration: float = 1.0
    method: str = "rk4"
    t0: float = 0.0
    disturbance: Optional[object] = None
    record_every: int = 1

    def __post_init__(self):
        if not self.step > 0:
            raise ParameterError("step must be positive")
        if not self.duration >= self.step:
            raise ParameterError("duration must be at least one step")
        if self.method != "rk4":
            raise ParameterError(f"unsupported method {self.method!r}; only 'rk4' is available")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.duration / self.step))


@dataclass
class Trajectory:
    """Sampled solution: times ``t``, states ``x`` (first axis is time) and events."""

    t: np.ndarray
    x: np.ndarray
    events: list = field(default_factory=list)

    def __post_init__(self):
        if self.t.ndim != 1 or self.x.shape[0] != self.t.shape[0]:
            raise ParameterError("time grid and state rows disagree")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ParameterError("time grid must be strictly increasing")

    @property
    def dim(self):
        return self.x.shape[-1]

    def window(self, start=None, stop=None):
        mask = np.ones_like(self.t, dtype=bool)
        if start is not None:
            mask &= self.t >= start - 1e-12
        if stop is not None:
            mask &= self.t <= stop + 1e-12
        return Trajectory(self.t[mask], self.x[mask],
                          [e for e in self.events
                           if (start is None or e[0] >= start) and (stop is None or e[0] <= stop)])

    def event_times(self, name):
        return [t for t, e in self.events if e == name]


def _rk4_step(f, t, x, h, w=None):
    if w is None:
        k1 = f(x, t)
        k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = f(x + h * k3, t + h)
    else:
        k1 = f(x, t) + w(t, 0)
        k2 = f(x + 0.5 * h * k1, t + 0.5 * h) + w(t, 0.5)
        k3 = f(x + 0.5 * h * k2, t + 0.5 * h) + w(t, 0.5)
        k4 = f(x + h * k3, t + h) + w(t, 1.0)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(vf: VectorField, x0, config: IntegratorConfig) -> Trajectory:
    """Classical fixed-step RK4 rollout.

    ``x0`` may carry leading batch axes when the field is vectorized and has
    no switching. For switched fields the mode is updated after every step
    and takes effect on the next one; sign changes of the region indicators
    are logged with linearly interpolated crossing times.
    """
    x = np.array(x0, dtype=float)
    if x.shape[-1] != vf.dim:
        raise ParameterError(f"initial state has dimension {x.shape[-1]}, field has {vf.dim}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("initial state must be finite")
    h = config.step
    n = config.n_steps
    every = config.record_every
    n_rec = n // every + 1
    ts = config.t0 + h * np.arange(0, n + 1, every)[:n_rec]
    xs = np.empty((n_rec,) + x.shape)
    xs[0] = x
    events = []

    dist = config.disturbance
    w = None
    if dist is not None:
        if getattr(dist, "piecewise_constant", False):
            def w(t, c):
                return dist(t + 0.5 * h)
        else:
            def w(t, c):
                return dist(t + c * h)

    sw = vf.switching
    if sw is not None:
        if x.ndim != 1:
            raise ParameterError("switched fields integrate one trajectory at a time")
        mode = tuple(sw.initial(config.t0, x))
        ind_prev = dict(sw.indicators(config.t0, x))
        for label, flag in zip(sw.labels, mode):
            if flag:
                events.append((config.t0, f"{label}:on"))

        def step(xk, tk):
            return _rk4_step(lambda z, t: vf.func(z, t, mode), tk, xk, h, w)
    else:
        def step(xk, tk):
            return _rk4_step(vf.func, tk, xk, h, w)

    t = config.t0
    for k in range(1, n + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            x_new = step(x, t)
        t_new = config.t0 + k * h
        if not np.all(np.isfinite(x_new)):
            raise DivergenceError(f"non-finite state after t={t:.6g}", last_time=t)
        if sw is not None:
            ind_new = dict(sw.indicators(t_new, x_new))
            for name, g1 in ind_new.items():
                g0 = ind_prev.get(name)
                if g0 is None:
                    continue
                if (g0 < 0) != (g1 < 0):
                    tc = t + h * g0 / (g0 - g1) if g0 != g1 else t_new
                    events.append((float(tc), f"{name}:{'enter' if g1 >= 0 else 'exit'}"))
            ind_prev = ind_new
            new_mode = tuple(sw.update(mode, t_new, x_new))
            for label, old, new in zip(sw.labels, mode, new_mode):
                if old != new:
                    events.append((float(t_new), f"{label}:{'on' if new else 'off'}"))
            mode = new_mode
        x = x_new
        t = t_new
        if k % every == 0:
            xs[k // every] = x
    events.sort(key=lambda e: e[0])
    return Trajectory(ts, xs, events)


# ---------------------------------------------------------------------------
# measurements


@dataclass(frozen=True)
class PeriodEstimate:
    period: float
    uncertainty: float
    crossings: np.ndarray


def section_crossings(traj: Trajectory, normal, offset=0.0, transient=0.0):
    """Times at which ``normal . x - offset`` crosses zero upward."""
    normal = np.asarray(normal, dtype=float)
    s = traj.x @ normal - offset
    t = traj.t
    up = np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]
    tc = t[up] + (t[up + 1] - t[up]) * (-s[up]) / (s[up + 1] - s[up])
    return tc[tc >= traj.t[0] + transient]


def estimate_period(traj: Trajectory, normal, offset=0.0, transient=0.0) -> PeriodEstimate:
    """Mean interval between successive upward crossings of a hyperplane.

    ``uncertainty`` is the largest deviation of any single interval from
    the mean.
    """
    tc = section_crossings(traj, normal, offset, transient)
    if tc.size < 3:
        raise NotPeriodicError(f"only {tc.size} section crossings after the transient")
    dt = np.diff(tc)
    mean = float(dt.mean())
    return PeriodEstimate(mean, float(np.max(np.abs(dt - mean))), tc)


def _node_view(x, n_nodes):
    return x.reshape(x.shape[:-1] + (n_nodes, x.shape[-1] // n_nodes))


def sync_error(traj: Trajectory, n_nodes: int, window: Optional[float] = None) -> float:
    """Largest pairwise node distance over the final ``window`` seconds.

    With ``window=None`` the whole trajectory is used.
    """
    if window is not None:
        traj = traj.window(traj.t[-1] - window, None)
    if traj.t.size == 0:
        raise ParameterError("empty window")
    nodes = _node_view(traj.x, n_nodes)
    diff = nodes[..., :, None, :] - nodes[..., None, :, :]
    return float(np.max(np.linalg.norm(diff, axis=-1)))


def min_distance_to_orbit(disturbed: Trajectory, nominal: Trajectory, metric=None):
    """Distance from each disturbed sample to the nearest nominal sample.

    ``metric`` may be a constant SPD matrix, in which case distances are
    measured in its norm. Disturbed states may carry batch axes; the result
    has the disturbed state shape without its last axis.
    """
    nom = nominal.x.reshape(-1, nominal.x.shape[-1])
    dis = np.asarray(disturbed.x)
    if nom.size == 0 or dis.size == 0:
        raise ParameterError("empty trajectory")
    flat = dis.reshape(-1, dis.shape[-1])
    if metric is not None:
        theta = np.linalg.cholesky(np.asarray(metric, dtype=float)).T
        nom = nom @ theta.T
        flat = flat @ theta.T
    dist, _ = cKDTree(nom).query(flat)
    return dist.reshape(dis.shape[:-1])


def oscillation_amplitude(traj: Trajectory, n_nodes: int, start=None, stop=None):
    """Per-node half peak-to-peak spread over a time window (Euclidean)."""
    seg = traj.window(start, stop)
    if seg.t.size == 0:
        raise ParameterError("empty window")
    nodes = _node_view(seg.x, n_nodes)
    spread = nodes.max(axis=0) - nodes.min(axis=0)
    return 0.5 * np.linalg.norm(spread, axis=-1)


# ---------------------------------------------------------------------------
# CSV export


def _fmt(v):
    return repr(float(v))


def write_trajectory_csv(traj: Trajectory, path, columns: Optional[Sequence[str]] = None):
    x = traj.x.reshape(traj.t.size, -1)
    names = list(columns) if columns is not None else [f"state_{i}" for i in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"] + names)
        for ti, row in zip(traj.t, x):
            wr.writerow([_fmt(ti)] + [_fmt(v) for v in row])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise SidmpError(f"{path}: expected a header starting with 't'")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return Trajectory(data[:, 0].copy(), data[:, 1:].copy())


def write_events_csv(traj: Trajectory, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "event"])
        for t, name in traj.events:
            wr.writerow([_fmt(t), name])

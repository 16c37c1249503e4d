"""Disturbance tube bound for transverse contracting systems.

With ``M = Theta^T Theta``, ``R = sup |Theta| / inf sigma_min(Theta)`` and a
disturbance bounded by ``wbar``, a disturbed trajectory stays within
``(R / rate) * wbar`` of the nominal orbit started at the same point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..simulate import IntegratorConfig, integrate, min_distance_to_orbit
from .certify import SAMPLE_NOTE
from .metrics import Metric, RegionSampler


def condition_bound(metric: Metric, sampler: RegionSampler):
    """``(R, theta_max, theta_min)`` over the sampled region."""
    xs = sampler.samples()
    if metric.constant:
        thetas = metric.theta(xs[0])[None]
    else:
        thetas = np.stack([metric.theta(x) for x in xs])
    sv = np.linalg.svd(thetas, compute_uv=False)
    hi, lo = float(sv[:, 0].max()), float(sv[:, -1].min())
    if lo <= 0:
        raise ParameterError("metric factor is singular on the region")
    return hi / lo, hi, lo


@dataclass(frozen=True)
class TubeReport:
    """Worst observed distance to the nominal orbit against the bound."""

    bound: float
    condition: float
    rate: float
    wbar: float
    worst_distance: float
    worst_ratio: float
    per_run_max: np.ndarray
    n_runs: int
    passed: bool
    inconclusive: bool
    note: str = SAMPLE_NOTE

    def summary(self):
        status = "INCONCLUSIVE" if self.inconclusive else ("PASS" if self.passed else "FAIL")
        return (f"{status} tube bound={self.bound:.4g} worst={self.worst_distance:.4g} "
                f"ratio={self.worst_ratio:.3f} runs={self.n_runs}")


def tube_bound_check(vf, metric: Metric, sampler: RegionSampler, rate: float, disturbance,
                     x0, duration: float, step: float = 1e-3,
                     nominal_duration=None) -> TubeReport:
    """Simulate disturbed and nominal runs from ``x0`` and compare with the bound.

    ``disturbance`` may hold several realizations on its leading axis (as a
    batched :class:`RandomPiecewiseDisturbance` does); each is one run. The
    nominal trajectory is simulated for ``nominal_duration`` (default twice
    ``duration``) so that phase drift of the disturbed runs stays covered.
    The report is inconclusive if any disturbed state leaves the region.
    """
    if rate <= 0:
        raise ParameterError("the certified rate must be positive")
    x0 = np.asarray(x0, dtype=float)
    probe = np.asarray(disturbance(0.0))
    n_runs = 1 if probe.ndim == 1 else probe.shape[0]
    start = np.broadcast_to(x0, (n_runs, x0.size)).copy() if probe.ndim > 1 else x0
    dist_traj = integrate(vf, start, IntegratorConfig(step=step, duration=duration,
                                                      disturbance=disturbance))
    nominal = integrate(vf, x0, IntegratorConfig(
        step=step, duration=nominal_duration or 2.0 * duration))
    d = min_distance_to_orbit(dist_traj, nominal)
    d = d.reshape(d.shape[0], -1)
    per_run = d.max(axis=0)
    cond, _, _ = condition_bound(metric, sampler)
    wbar = float(disturbance.sup_norm)
    bound = cond / rate * wbar
    inside = sampler.contains(dist_traj.x.reshape(-1, x0.size))
    worst = float(per_run.max())
    ratio = worst / bound if bound > 0 else (0.0 if worst == 0 else np.inf)
    return TubeReport(bound=bound, condition=cond, rate=float(rate), wbar=wbar,
                      worst_distance=worst, worst_ratio=float(ratio), per_run_max=per_run,
                      n_runs=n_runs, passed=bool(worst <= bound + 1e-12),
                      inconclusive=bool(not np.all(inside)))


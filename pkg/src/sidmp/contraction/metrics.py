"""Riemannian metrics, region samplers and metric pushforward."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from ..dynamics import FD_REL_STEP
from ..errors import DomainError, ParameterError


@dataclass(frozen=True)
class Metric:
    """State-dependent metric ``M(x)``, symmetric positive definite.

    ``factor`` optionally returns ``Theta(x)`` with ``M = Theta^T Theta``;
    ``derivative(x, fx)`` optionally returns the rate of change of ``M``
    along the vector ``fx``. A ``constant`` metric has zero derivative.
    """

    func: Callable
    factor: Optional[Callable] = None
    derivative: Optional[Callable] = None
    name: str = "metric"
    constant: bool = False

    @classmethod
    def identity(cls, n):
        eye = np.eye(n)
        return cls(lambda x: eye, lambda x: eye, name="identity", constant=True)

    @classmethod
    def from_matrix(cls, m, name="constant"):
        m = np.asarray(m, dtype=float)
        if not np.allclose(m, m.T, atol=1e-12):
            raise ParameterError("metric matrix must be symmetric")
        theta = np.linalg.cholesky(m).T
        return cls(lambda x: m, lambda x: theta, name=name, constant=True)

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def theta(self, x):
        if self.factor is not None:
            return np.asarray(self.factor(np.asarray(x, dtype=float)), dtype=float)
        return np.linalg.cholesky(self(x)).T

    def rate(self, x, fx):
        """``dM/dt`` along the direction ``fx`` at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.constant:
            return np.zeros((x.shape[-1], x.shape[-1]))
        if self.derivative is not None:
            return np.asarray(self.derivative(x, fx), dtype=float)
        speed = float(np.linalg.norm(fx))
        if speed == 0.0:
            return np.zeros((x.size, x.size))
        eps = FD_REL_STEP * (1.0 + float(np.linalg.norm(x))) / speed
        return (self(x + eps * fx) - self(x - eps * fx)) / (2.0 * eps)

    def batch(self, xs):
        if self.constant:
            m = self(xs[0])
            return np.broadcast_to(m, (len(xs),) + m.shape)
        return np.stack([self(x) for x in xs])


@dataclass(frozen=True)
class RegionSampler:
    """Low-discrepancy samples of a region.

    ``kind`` is ``box`` (``low``/``high``), ``ball`` (``center``/``outer``),
    ``annulus`` (``center``/``inner``/``outer``; a spherical shell in more
    than two dimensions) or ``points`` (explicit list). Planar balls and
    annuli can add ``boundary`` evenly spaced points on each boundary circle.
    """

    kind: str
    dim: int
    n_samples: int = 4096
    seed: int = 0
    low: Optional[np.ndarray] = None
    high: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    inner: float = 0.0
    outer: float = 1.0
    points: Optional[np.ndarray] = None
    boundary: int = 0
    include_center: bool = False
    name: str = field(default="")

    @classmethod
    def box(cls, low, high, n_samples=4096, seed=0):
        low = np.asarray(low, dtype=float)
        high = np.asarray(high, dtype=float)
        if np.any(high < low):
            raise ParameterError("box needs low <= high")
        return cls("box", low.size, n_samples, seed, low=low, high=high,
                   name=f"box{low.tolist()}-{high.tolist()}")

    @classmethod
    def ball(cls, center, radius, n_samples=4096, seed=0, boundary=0, include_center=True):
        c = np.asarray(center, dtype=float)
        if radius <= 0:
            raise ParameterError("radius must be positive")
        return cls("ball", c.size, n_samples, seed, center=c, outer=float(radius),
                   boundary=boundary, include_center=include_center,
                   name=f"ball(c={c.tolist()}, r={radius})")

    @classmethod
    def annulus(cls, center, inner, outer, n_samples=4096, seed=0, boundary=0):
        c = np.asarray(center, dtype=float)
        if not 0 <= inner <= outer or outer <= 0:
            raise ParameterError("annulus needs 0 <= inner <= outer, outer > 0")
        return cls("annulus", c.size, n_samples, seed, center=c, inner=float(inner),
                   outer=float(outer), boundary=boundary,
                   name=f"annulus(c={c.tolist()}, {inner}..{outer})")

    @classmethod
    def from_points(cls, points, name="points"):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return cls("points", p.shape[1], p.shape[0], points=p, name=name)

    def _unit(self, d):
        eng = qmc.Halton(d=d, scramble=True, seed=self.seed)
        u = eng.random(self.n_samples)
        return np.clip(u, 1e-12, 1 - 1e-12)

    def _shell(self, r_in, r_out):
        n = self.dim
        if n == 2:
            u = self._unit(2)
            rad = np.sqrt(r_in**2 + u[:, 0] * (r_out**2 - r_in**2))
            ang = 2 * np.pi * u[:, 1]
            pts = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        else:
            u = self._unit(n + 1)
            g = _normal.ppf(u[:, :n])
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            rad = (r_in**n + u[:, n] * (r_out**n - r_in**n)) ** (1.0 / n)
            pts = g * rad[:, None]
        extra = []
        if self.boundary and n == 2:
            ang = 2 * np.pi * np.arange(self.boundary) / self.boundary
            ring = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            extra.append(r_out * ring)
            if r_in > 0:
                extra.append(r_in * ring)
        if self.include_center:
            extra.append(np.zeros((1, n)))
        if extra:
            pts = np.vstack([pts] + extra)
        return pts + self.center

    def samples(self):
        if self.kind == "points":
            return np.array(self.points, dtype=float)
        if self.kind == "box":
            u = self._unit(self.dim)
            return self.low + u * (self.high - self.low)
        if self.kind == "ball":
            return self._shell(0.0, self.outer)
        if self.kind == "annulus":
            return self._shell(self.inner, self.outer)
        raise ParameterError(f"unknown region kind {self.kind!r}")

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return np.all((x >= self.low - tol) & (x <= self.high + tol), axis=-1)
        if self.kind in ("ball", "annulus"):
            r = np.linalg.norm(x - self.center, axis=-1)
            inner = self.inner if self.kind == "annulus" else 0.0
            return (r >= inner - tol) & (r <= self.outer + tol)
        pts = np.asarray(self.points)
        d = np.min(np.linalg.norm(x[..., None, :] - pts, axis=-1), axis=-1)
        return d <= tol

    def describe(self):
        return self.name or self.kind


def pushforward_metric(metric: Metric, diffeo) -> Metric:
    """Metric on ``y' = T(y)``: ``M'(y') = J^{-T} M(T^{-1} y') J^{-1}``."""

    def inv_jac(y):
        jm = np.asarray(diffeo.jacobian(y), dtype=float)
        if np.linalg.cond(jm) > 1e12:
            raise DomainError("Jacobian of the map is singular")
        return np.linalg.inv(jm)

    def func(yp):
        y = diffeo.inverse(yp)
        ji = inv_jac(y)
        return ji.T @ metric(y) @ ji

    def factor(yp):
        y = diffeo.inverse(yp)
        return metric.theta(y) @ inv_jac(y)

    constant = metric.constant and getattr(diffeo, "is_affine", False)
    return Metric(func, factor, name=f"T*{metric.name}", constant=constant)

"""Vector fields for dynamic movement primitives.

Everything here is a plain function of state arrays. Fields accept a
trailing state axis and arbitrary leading batch axes, so a single call can
evaluate many states at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (
    DegenerateBasisError,
    DimensionError,
    DomainError,
    ParameterError,
)

FD_REL_STEP = 1e-6
# activations below this are treated as an empty basis
DEGENERATE_ACTIVATION = 1e-300

ArrayLike = Union[float, Sequence[float], np.ndarray]


def finite_difference_jacobian(func, x, rel_step=FD_REL_STEP):
    """Central-difference Jacobian of ``func`` at ``x`` (batched over leading axes).

    The step for coordinate ``j`` is ``rel_step * (1 + |x_j|)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    steps = rel_step * (1.0 + np.abs(x))
    cols = []
    for j in range(n):
        e = np.zeros_like(x)
        e[..., j] = steps[..., j]
        diff = np.asarray(func(x + e)) - np.asarray(func(x - e))
        cols.append(diff / (2.0 * steps[..., j, None]))
    return np.stack(cols, axis=-1)


def rotation_matrix(phi):
    """Planar rotation by ``phi`` radians."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Switching:
    """Discrete mode logic riding on top of a continuous field.

    ``initial(t, x)`` and ``update(mode, t, x)`` return tuples of booleans,
    one per entry of ``labels``. ``indicators(t, x)`` returns signed region
    indicators (positive inside) whose sign changes are logged as events.
    """

    labels: tuple
    initial: Callable
    update: Callable
    indicators: Callable


@dataclass(frozen=True)
class VectorField:
    """Right-hand side ``x -> f(x, t)`` of an ODE on R^dim.

    ``func`` takes ``(x, t)``; when ``switching`` is set it takes
    ``(x, t, mode)`` instead. ``jac`` is an optional analytic Jacobian with
    the same signature; without it a central-difference Jacobian is used.
    """

    dim: int
    func: Callable
    jac: Optional[Callable] = None
    name: str = "field"
    autonomous: bool = True
    switching: Optional[Switching] = None
    blocks: Optional[dict] = field(default=None, compare=False)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(
                f"{self.name}: expected state of dimension {self.dim}, got {x.shape[-1]}"
            )
        return x

    def _mode(self, x, t, mode):
        if mode is None:
            mode = self.switching.initial(t, x)
        return mode

    def __call__(self, x, t=0.0, mode=None):
        x = self._check(x)
        if self.switching is None:
            return np.asarray(self.func(x, t), dtype=float)
        return np.asarray(self.func(x, t, self._mode(x, t, mode)), dtype=float)

    def jacobian(self, x, t=0.0, mode=None):
        x = self._check(x)
        if self.switching is not None:
            mode = self._mode(x, t, mode)
            if self.jac is not None:
                return np.asarray(self.jac(x, t, mode), dtype=float)
            return finite_difference_jacobian(lambda z: self.func(z, t, mode), x)
        if self.jac is not None:
            return np.asarray(self.jac(x, t), dtype=float)
        return finite_difference_jacobian(lambda z: self.func(z, t), x)

    def with_mode(self, mode):
        """Freeze the discrete mode, giving an ordinary field."""
        if self.switching is None:
            return self
        mode = tuple(mode)
        jac = None
        if self.jac is not None:
            jac = lambda x, t=0.0: self.jac(x, t, mode)  # noqa: E731
        return VectorField(
            dim=self.dim,
            func=lambda x, t=0.0: self.func(x, t, mode),
            jac=jac,
            name=f"{self.name}[{','.join('1' if m else '0' for m in mode)}]",
            autonomous=self.autonomous,
            blocks=self.blocks,
        )


def _positive(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ParameterError(f"{name} must be strictly positive, got {value!r}")


# ---------------------------------------------------------------------------
# canonical systems


@dataclass(frozen=True)
class ExponentialPhase:
    """Decaying phase variable, ``tau * xdot = -alpha_x * x``."""

    alpha_x: float = 1.0
    tau: float = 1.0
    kind = "exponential-decay"
    dim = 1
    rotation_invariant = False

    def __post_init__(self):
        _positive("alpha_x", self.alpha_x)
        _positive("tau", self.tau)

    def rhs(self, x):
        return -self.alpha_x * np.asarray(x, dtype=float) / self.tau

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(
            np.array([[-self.alpha_x / self.tau]]), x.shape[:-1] + (1, 1)
        ).copy()

    def field(self):
        return VectorField(1, lambda x, t=0.0: self.rhs(x),
                           lambda x, t=0.0: self.jacobian(x), name="exp-phase")


@dataclass(frozen=True)
class Hopf:
    """Andronov-Hopf oscillator with a stable limit cycle at ``radius``.

    The cycle is traversed clockwise with angular rate ``omega / tau``.
    """

    omega: float = 2.0 * np.pi
    rho: float = 1.0
    radius: float = 1.0
    tau: float = 1.0
    kind = "hopf"
    dim = 2
    rotation_invariant = True

    def __post_init__(self):
        _positive("tau", self.tau)
        _positive("rho", self.rho)
        _positive("radius", self.radius)
        if not np.all(np.isfinite(self.omega)):
            raise ParameterError("omega must be finite")

    def rhs(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        radial = self.rho * (self.radius**2 - x1 * x1 - x2 * x2)
        return np.stack(
            [self.omega * x2 + radial * x1, -self.omega * x1 + radial * x2], axis=-1
        ) / self.tau

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        radial = self.rho * (self.radius**2 - x1 * x1 - x2 * x2)
        j = np.empty(x.shape[:-1] + (2, 2))
        j[..., 0, 0] = radial - 2 * self.rho * x1 * x1
        j[..., 0, 1] = self.omega - 2 * self.rho * x1 * x2
        j[..., 1, 0] = -self.omega - 2 * self.rho * x1 * x2
        j[..., 1, 1] = radial - 2 * self.rho * x2 * x2
        return j / self.tau

    def period(self):
        return 2.0 * np.pi * self.tau / abs(self.omega)

    def field(self):
        return VectorField(2, lambda x, t=0.0: self.rhs(x),
                           lambda x, t=0.0: self.jacobian(x), name="hopf")


@dataclass(frozen=True)
class VanDerPol:
    """Van der Pol oscillator ``x1' = x2, x2' = -omega^2 x1 + mu * s(x1) * x2``.

    By default ``s(x1) = 1 - x1``; ``classical=True`` selects ``1 - x1**2``.
    The default form has no bounded limit cycle for large excursions, so
    the heterogeneous network scenario uses the classical one.
    """

    omega: float = 1.0
    mu: float = 1.0
    classical: bool = False
    kind = "vanderpol"
    dim = 2
    rotation_invariant = False

    def __post_init__(self):
        _positive("omega", self.omega)
        if not np.all(np.isfinite(self.mu)):
            raise ParameterError("mu must be finite")

    def _shape(self, x1):
        return 1.0 - x1 * x1 if self.classical else 1.0 - x1

    def rhs(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack(
            [x2, -self.omega**2 * x1 + self.mu * self._shape(x1) * x2], axis=-1
        )

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        ds = -2.0 * x1 if self.classical else -np.ones_like(x1)
        j = np.zeros(x.shape[:-1] + (2, 2))
        j[..., 0, 1] = 1.0
        j[..., 1, 0] = -self.omega**2 + self.mu * ds * x2
        j[..., 1, 1] = self.mu * self._shape(x1)
        return j

    def field(self):
        return VectorField(2, lambda x, t=0.0: self.rhs(x),
                           lambda x, t=0.0: self.jacobian(x), name="vanderpol")


@dataclass(frozen=True)
class CustomCanonical:
    """Wraps an arbitrary autonomous field as a canonical system."""

    vector_field: VectorField
    rotation_invariant: bool = False
    kind = "custom"

    @property
    def dim(self):
        return self.vector_field.dim

    def rhs(self, x):
        return self.vector_field(x)

    def jacobian(self, x):
        return self.vector_field.jacobian(x)

    def field(self):
        return self.vector_field


def eval_hopf(params: Hopf, x):
    return params.rhs(x)


def eval_vanderpol(params: VanDerPol, x):
    return params.rhs(x)


# ---------------------------------------------------------------------------
# forcing functions


def _as_weights(weights, phase_dim):
    w = np.asarray(weights, dtype=float)
    if phase_dim == 1:
        # (n_basis,) scalar output, or (n_basis, n_out)
        return w
    if w.ndim == 2 and w.shape[1] == phase_dim:
        return w
    if w.ndim == 3 and w.shape[2] == phase_dim:
        return w
    raise DimensionError(
        f"von Mises weights must have shape (n_basis, 2) or (n_basis, n_out, 2), got {w.shape}"
    )


@dataclass(frozen=True)
class GaussianForcing:
    """Normalized Gaussian mixture in a scalar phase, scaled by the phase.

    ``f(x) = sum_i Phi_i(x) w_i / sum_i Phi_i(x) * x`` with
    ``Phi_i(x) = exp(-(x - c_i)^2 / (2 width^2))``.
    """

    centers: np.ndarray
    width: float
    weights: np.ndarray
    kind = "gaussian"
    phase_dim = 1

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "weights", _as_weights(self.weights, 1))
        _positive("width", self.width)
        if c.size < 1:
            raise ParameterError("at least one basis function is required")
        if self.weights.shape[0] != c.size:
            raise DimensionError("one weight (row) per basis function is required")

    @property
    def n_basis(self):
        return self.centers.size

    def activations(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-((x[..., None] - self.centers) ** 2) / (2.0 * self.width**2))

    def normalized(self, x):
        phi = self.activations(x)
        total = phi.sum(axis=-1, keepdims=True)
        if np.any(total < DEGENERATE_ACTIVATION):
            raise DegenerateBasisError("Gaussian basis activations vanish at the requested phase")
        return phi / total

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        psi = self.normalized(x)
        mix = psi @ self.weights
        if self.weights.ndim == 1:
            return mix * x
        return mix * x[..., None]

    def with_weights(self, weights):
        return GaussianForcing(self.centers, self.width, weights)


@dataclass(frozen=True)
class VonMisesForcing:
    """Normalized von Mises mixture in the angle of a planar phase.

    ``f(x) = sum_i Phi_i(theta) w_i^T / sum_i Phi_i(theta) x`` with
    ``theta = atan2(x2, x1)`` and
    ``Phi_i(theta) = exp((cos(theta - theta_i) - 1) / (2 width^2))``.
    """

    centers: np.ndarray
    width: float
    weights: np.ndarray
    kind = "von-mises"
    phase_dim = 2

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "weights", _as_weights(self.weights, 2))
        _positive("width", self.width)
        if c.size < 1:
            raise ParameterError("at least one basis function is required")
        if self.weights.shape[0] != c.size:
            raise DimensionError("one weight block per basis function is required")

    @property
    def n_basis(self):
        return self.centers.size

    def activations_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.exp((np.cos(theta[..., None] - self.centers) - 1.0) / (2.0 * self.width**2))

    def activations(self, x):
        x = np.asarray(x, dtype=float)
        return self.activations_theta(np.arctan2(x[..., 1], x[..., 0]))

    def normalized(self, x):
        phi = self.activations(x)
        total = phi.sum(axis=-1, keepdims=True)
        if np.any(total < DEGENERATE_ACTIVATION):
            raise DegenerateBasisError("von Mises activations vanish at the requested phase")
        return phi / total

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        psi = self.normalized(x)
        if self.weights.ndim == 2:
            w_mix = psi @ self.weights  # (..., 2)
            return np.sum(w_mix * x, axis=-1)
        w_mix = np.einsum("...i,ioc->...oc", psi, self.weights)
        return np.einsum("...oc,...c->...o", w_mix, x)

    def with_weights(self, weights):
        return VonMisesForcing(self.centers, self.width, weights)


Forcing = Union[GaussianForcing, VonMisesForcing]


def eval_forcing(forcing: Forcing, phase):
    """Evaluate a forcing function at a scalar (Gaussian) or planar (von Mises) phase."""
    return forcing(phase)


# ---------------------------------------------------------------------------
# reference, transformation and discrete DMP


@dataclass(frozen=True)
class ReferenceSystem:
    """First-order filter ``r' = gain * (r_ext(t) - r)``.

    ``command`` is a constant vector or a callable of time.
    """

    gain: ArrayLike
    command: Union[Callable, ArrayLike]
    dim: Optional[int] = None

    def __post_init__(self):
        _positive("reference gain", self.gain)
        if self.dim is None:
            if callable(self.command):
                raise ParameterError("dim is required when the command is a function of time")
            object.__setattr__(self, "dim", int(np.atleast_1d(self.command).size))
        g = np.atleast_1d(np.asarray(self.gain, dtype=float))
        if g.size not in (1, self.dim):
            raise DimensionError("reference gain must be scalar or match the reference dimension")
        if not callable(self.command) and np.atleast_1d(self.command).size != self.dim:
            raise DimensionError("dim(r) must equal dim(r_ext)")

    def command_at(self, t):
        if callable(self.command):
            return np.atleast_1d(np.asarray(self.command(t), dtype=float))
        return np.atleast_1d(np.asarray(self.command, dtype=float))

    def rhs(self, r, t=0.0):
        return np.asarray(self.gain, dtype=float) * (self.command_at(t) - r)


@dataclass(frozen=True)
class TransformationSystem:
    """Spring-damper output system driven by the phase of one canonical node.

    ``tau * y'' = k (g - y) + b (gdot - y') + f(x)`` where the goal ``g`` and
    goal rate ``gdot`` may depend on the phase and the reference. With
    ``time_scaled=True`` the velocity state is ``v = tau * y'`` and the whole
    first-order field is divided by ``tau``, so doubling ``tau`` slows the
    output by exactly a factor two.
    """

    k: ArrayLike
    b: ArrayLike
    tau: float = 1.0
    dim: int = 1
    forcing: Optional[Forcing] = None
    goal: Union[Callable, ArrayLike, None] = None
    goal_rate: Optional[Callable] = None
    node: int = 0
    time_scaled: bool = False

    def __post_init__(self):
        _positive("k", self.k)
        _positive("b", self.b)
        _positive("tau", self.tau)

    def goal_at(self, x, r):
        if self.goal is None:
            return np.asarray(r, dtype=float)[..., : self.dim]
        if callable(self.goal):
            return np.asarray(self.goal(x, r), dtype=float)
        return np.asarray(self.goal, dtype=float)

    def rhs(self, y, yd, x, xdot, r):
        g = self.goal_at(x, r)
        gdot = 0.0 if self.goal_rate is None else np.asarray(self.goal_rate(x, xdot, r))
        force = 0.0
        if self.forcing is not None:
            force = self.forcing(x[..., 0] if self.forcing.phase_dim == 1 else x)
            force = np.asarray(force, dtype=float)
            if force.ndim < np.ndim(y):
                force = force[..., None]
        k = np.asarray(self.k, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if self.time_scaled:
            acc = (k * (g - y) + b * (self.tau * gdot - yd) + force) / self.tau
            return yd / self.tau, acc
        return yd, (k * (g - y) + b * (gdot - yd) + force) / self.tau


@dataclass(frozen=True)
class DiscreteDMP:
    """Point-to-point primitive on the state ``[y, y', x]``."""

    k: float
    b: float
    goal: ArrayLike
    tau: float = 1.0
    alpha_x: float = 1.0
    forcing: Optional[GaussianForcing] = None
    time_scaled: bool = False

    def __post_init__(self):
        _positive("k", self.k)
        _positive("b", self.b)
        _positive("tau", self.tau)
        _positive("alpha_x", self.alpha_x)

    @property
    def n_out(self):
        return int(np.atleast_1d(self.goal).size)

    @property
    def dim(self):
        return 2 * self.n_out + 1

    def transformation(self):
        return TransformationSystem(self.k, self.b, self.tau, self.n_out, self.forcing,
                                    np.atleast_1d(self.goal), time_scaled=self.time_scaled)

    def canonical(self):
        return ExponentialPhase(self.alpha_x, self.tau)

    def rhs(self, state):
        state = np.asarray(state, dtype=float)
        m = self.n_out
        y, yd, x = state[..., :m], state[..., m:2 * m], state[..., 2 * m:]
        xdot = self.canonical().rhs(x)
        dy, dyd = self.transformation().rhs(y, yd, x, xdot, None)
        return np.concatenate([dy, dyd, xdot], axis=-1)

    def field(self):
        return VectorField(self.dim, lambda s, t=0.0: self.rhs(s), name="discrete-dmp")


def eval_discrete_dmp(dmp: DiscreteDMP, state, t=0.0):
    """State derivative ``(y', y'', x')`` of a discrete DMP (autonomous, ``t`` unused)."""
    return dmp.rhs(state)


# ---------------------------------------------------------------------------
# hierarchy composition


def _canonical_field(canon):
    if isinstance(canon, VectorField):
        return canon
    return canon.field()


def compose_hierarchy(ref: ReferenceSystem, canon, transforms: Sequence[TransformationSystem],
                      node_dim: Optional[int] = None) -> VectorField:
    """Stack reference, canonical and transformation systems into one field.

    State layout is ``[r, x, y_1, y_1', y_2, y_2', ...]``. The canonical
    state may hold several nodes of size ``node_dim``; each transformation
    system reads the node given by its ``node`` attribute. Information flows
    only from ``r`` to ``x`` to ``y``.
    """
    cfield = _canonical_field(canon)
    n_r = ref.dim
    n_x = cfield.dim
    node_dim = n_x if node_dim is None else int(node_dim)
    if n_x % node_dim:
        raise DimensionError("canonical dimension is not a multiple of node_dim")
    n_nodes = n_x // node_dim
    blocks = {"r": slice(0, n_r), "x": slice(n_r, n_r + n_x)}
    offset = n_r + n_x
    layout = []
    for idx, tr in enumerate(transforms):
        if not 0 <= tr.node < n_nodes:
            raise DimensionError(f"transformation {idx} reads missing canonical node {tr.node}")
        if tr.forcing is not None and tr.forcing.phase_dim != node_dim:
            raise DimensionError(
                f"transformation {idx}: forcing expects phase of dimension "
                f"{tr.forcing.phase_dim}, canonical nodes have {node_dim}"
            )
        ys = slice(offset, offset + tr.dim)
        yds = slice(offset + tr.dim, offset + 2 * tr.dim)
        blocks[f"y{idx}"] = slice(offset, offset + 2 * tr.dim)
        layout.append((tr, ys, yds, slice(tr.node * node_dim, (tr.node + 1) * node_dim)))
        offset += 2 * tr.dim
    blocks["y"] = slice(n_r + n_x, offset)
    dim = offset
    switched = cfield.switching is not None
    xs = blocks["x"]

    def func(z, t, mode=None):
        r = z[..., blocks["r"]]
        x = z[..., xs]
        xdot = cfield.func(x, t, mode) if switched else cfield.func(x, t)
        out = np.empty_like(z)
        out[..., blocks["r"]] = ref.rhs(r, t)
        out[..., xs] = xdot
        for tr, ys, yds, ns in layout:
            dy, dyd = tr.rhs(z[..., ys], z[..., yds], x[..., ns], xdot[..., ns], r)
            out[..., ys] = dy
            out[..., yds] = dyd
        return out

    switching = None
    if switched:
        cs = cfield.switching
        switching = Switching(
            labels=cs.labels,
            initial=lambda t, z: cs.initial(t, z[..., xs]),
            update=lambda mode, t, z: cs.update(mode, t, z[..., xs]),
            indicators=lambda t, z: cs.indicators(t, z[..., xs]),
        )
        wrapped = func
    else:
        def wrapped(z, t):
            return func(z, t)

    return VectorField(dim, wrapped, None, name="hierarchy",
                       autonomous=not callable(ref.command) and cfield.autonomous,
                       switching=switching, blocks=blocks)


# ---------------------------------------------------------------------------
# diffeomorphisms


@dataclass(frozen=True)
class AffineMap:
    """``y' = scale * R y + shift`` with ``R`` a proper rotation."""

    scale: float
    rotation: np.ndarray
    shift: np.ndarray
    is_affine = True

    def __post_init__(self):
        _positive("scale", self.scale)
        rot = np.atleast_2d(np.asarray(self.rotation, dtype=float))
        n = rot.shape[0]
        if rot.shape != (n, n) or not np.allclose(rot @ rot.T, np.eye(n), atol=1e-10) \
                or np.linalg.det(rot) < 0:
            raise ParameterError("rotation must be a proper orthogonal matrix")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "shift", np.broadcast_to(
            np.asarray(self.shift, dtype=float), (n,)).copy())

    @classmethod
    def identity(cls, n):
        return cls(1.0, np.eye(n), np.zeros(n))

    @property
    def matrix(self):
        return self.scale * self.rotation

    def forward(self, y):
        return np.asarray(y, dtype=float) @ self.matrix.T + self.shift

    def inverse(self, yp):
        return (np.asarray(yp, dtype=float) - self.shift) @ self.rotation / self.scale

    def jacobian(self, y):
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(self.matrix, y.shape[:-1] + self.matrix.shape).copy()


@dataclass(frozen=True)
class Diffeomorphism:
    """General smooth invertible map given by forward, inverse and Jacobian callables."""

    forward: Callable
    inverse: Callable
    jacobian: Callable
    is_affine = False


def apply_diffeomorphism(vf: VectorField, diffeo, time_scale: Optional[Callable] = None
                         ) -> VectorField:
    """Conjugate ``vf`` by ``diffeo`` and divide by a positive time scale.

    The new field is ``y'' = J(y) f(y) / tau(t)`` evaluated at
    ``y = T^{-1}(y')``.
    """
    if vf.switching is not None:
        raise ParameterError("freeze the discrete mode before transforming a switched field")
    tau = (lambda t: 1.0) if time_scale is None else time_scale

    def pull_back(yp):
        y = np.asarray(diffeo.inverse(yp), dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("inverse map failed to produce a finite preimage")
        return y

    def func(yp, t=0.0):
        s = tau(t)
        if not s > 0:
            raise DomainError(f"time scale must be positive, got {s}")
        y = pull_back(yp)
        jm = diffeo.jacobian(y)
        return np.einsum("...ij,...j->...i", jm, vf(y, t)) / s

    jac = None
    if getattr(diffeo, "is_affine", False):
        mat = diffeo.matrix
        inv = np.linalg.inv(mat)

        def jac(yp, t=0.0):
            y = pull_back(yp)
            return mat @ vf.jacobian(y, t) @ inv / tau(t)

    return VectorField(vf.dim, func, jac, name=f"T*{vf.name}",
                       autonomous=vf.autonomous and time_scale is None)

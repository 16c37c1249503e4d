"""Coupled oscillator networks, block Laplacians and sparse inhibition."""
from __future__ import annotations

import csv
import dataclasses
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import helmert

from .contraction.certify import Certificate, certified_rate, contraction_margins
from .contraction.metrics import Metric, RegionSampler
from .dynamics import Switching, VectorField, rotation_matrix
from .errors import DimensionError, NotContractingError, ParameterError

KERNEL_TOL = 1e-10


def _wrap(phi):
    return (phi + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class CouplingGraph:
    """Directed edge list with matrix gains and optional phase offsets.

    Edge ``(i, j)`` means node ``i`` receives ``K_ij (R(phi_ij) x_j - x_i)``.
    Scalar gains stand for ``k I`` at whatever node dimension is used.
    In symmetric mode (``directed=False``) every edge must appear in both
    directions with ``K_ij == K_ji`` and ``phi_ij == -phi_ji``. In directed
    mode all gains must equal one symmetric positive definite ``K``.
    """

    n_nodes: int
    gains: dict
    offsets: dict = field(default_factory=dict)
    directed: bool = False

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ParameterError("need at least one node")
        gains = {tuple(map(int, e)): np.atleast_2d(np.asarray(k, dtype=float))
                 for e, k in self.gains.items()}
        offsets = {tuple(map(int, e)): float(p) for e, p in self.offsets.items()}
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "offsets", offsets)
        dims = {k.shape for k in gains.values()}
        if len(dims) > 1:
            raise DimensionError(f"gain matrices have mixed shapes {sorted(dims)}")
        for (i, j), k in gains.items():
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes) or i == j:
                raise ParameterError(f"invalid edge ({i}, {j})")
            if k.shape[0] != k.shape[1]:
                raise DimensionError(f"gain on edge ({i}, {j}) is not square")
            if np.min(np.linalg.eigvalsh(0.5 * (k + k.T))) <= 0:
                raise ParameterError(f"symmetric part of K_{i}{j} is not positive definite")
        for e in offsets:
            if e not in gains:
                raise ParameterError(f"offset given for missing edge {e}")
        if self.directed:
            ks = list(gains.values())
            if ks and not all(np.array_equal(k, ks[0]) for k in ks):
                raise ParameterError("directed mode needs one common gain matrix K")
            if ks and not np.allclose(ks[0], ks[0].T, atol=1e-12):
                raise ParameterError("directed mode needs K = K^T")
        else:
            for (i, j), k in gains.items():
                back = gains.get((j, i))
                if back is None:
                    raise ParameterError(f"edge ({i}, {j}) has no reverse edge in symmetric mode")
                if not np.array_equal(k, back):
                    raise ParameterError(f"asymmetric gains: K_{i}{j} != K_{j}{i}")
                if abs(_wrap(offsets.get((i, j), 0.0) + offsets.get((j, i), 0.0))) > 1e-12:
                    raise ParameterError(f"offsets on ({i}, {j}) are not antisymmetric")

    @classmethod
    def from_edges(cls, n_nodes, edges, gain, offsets=None, directed=False):
        """Build from ``(i, j)`` pairs sharing one gain (scalar or matrix).

        In symmetric mode each pair is added in both directions and
        ``offsets[(i, j)]`` implies ``offsets[(j, i)] = -offsets[(i, j)]``.
        """
        k = np.atleast_2d(np.asarray(gain, dtype=float))
        gains, offs = {}, {}
        for i, j in edges:
            gains[(i, j)] = k
            if not directed:
                gains[(j, i)] = k
        for (i, j), p in (offsets or {}).items():
            offs[(i, j)] = float(p)
            if not directed:
                offs[(j, i)] = -float(p)
        return cls(n_nodes, gains, offs, directed)

    @classmethod
    def all_to_all(cls, n_nodes, gain, phases=None):
        """Complete graph; ``phases`` (one per node) sets ``phi_ij = psi_i - psi_j``."""
        edges = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)]
        offsets = None
        if phases is not None:
            psi = np.asarray(phases, dtype=float)
            offsets = {(i, j): psi[i] - psi[j] for i, j in edges}
        return cls.from_edges(n_nodes, edges, gain, offsets)

    @property
    def scalar_gains(self):
        return all(k.shape == (1, 1) for k in self.gains.values())

    @property
    def node_dim(self):
        """Node dimension fixed by matrix gains; ``None`` for scalar gains."""
        if not self.gains or self.scalar_gains:
            return None
        return next(iter(self.gains.values())).shape[0]

    @property
    def has_offsets(self):
        return any(abs(_wrap(p)) > 0 for p in self.offsets.values())

    def neighbors(self, i):
        return sorted(j for (a, j) in self.gains if a == i)

    def reachable_from(self, node):
        """Nodes influenced (directly or not) by ``node``."""
        seen, todo = {node}, deque([node])
        while todo:
            j = todo.popleft()
            for (a, b) in self.gains:
                if b == j and a not in seen:
                    seen.add(a)
                    todo.append(a)
        return seen

    def is_connected(self):
        """Connectivity ignoring edge direction."""
        if self.n_nodes == 1:
            return True
        adj = {i: set() for i in range(self.n_nodes)}
        for (i, j) in self.gains:
            adj[i].add(j)
            adj[j].add(i)
        seen, todo = {0}, deque([0])
        while todo:
            a = todo.popleft()
            for b in adj[a] - seen:
                seen.add(b)
                todo.append(b)
        return len(seen) == self.n_nodes

    def node_phases(self):
        """Per-node phases ``psi`` with ``phi_ij = psi_i - psi_j`` (``psi_0 = 0``).

        Built along a spanning tree; raises if the offsets around some cycle
        do not sum to a multiple of 2 pi or the graph is disconnected.
        """
        psi = {0: 0.0}
        todo = deque([0])
        while todo:
            j = todo.popleft()
            for (a, b) in self.gains:
                for i, other, sign in ((a, b, 1.0), (b, a, -1.0)):
                    if other == j and i not in psi:
                        phi = self.offsets.get((a, b), 0.0)
                        psi[i] = psi[j] + sign * phi
                        todo.append(i)
        if len(psi) != self.n_nodes:
            raise ParameterError("graph is not connected")
        out = np.array([psi[i] for i in range(self.n_nodes)])
        for (i, j) in self.gains:
            if abs(_wrap(out[i] - out[j] - self.offsets.get((i, j), 0.0))) > 1e-9:
                raise ParameterError("phase offsets are inconsistent around a cycle")
        return out


def laplacian_matrix(graph: CouplingGraph, node_dim: Optional[int] = None, offsets=True):
    """``L`` with ``(L x)_i = sum_j K_ij (x_i - R(phi_ij) x_j)``."""
    n = node_dim or graph.node_dim or 1
    big = np.zeros((graph.n_nodes * n, graph.n_nodes * n))
    for (i, j), k in graph.gains.items():
        if k.shape == (1, 1) and n > 1:
            k = k[0, 0] * np.eye(n)
        if k.shape[0] != n:
            raise DimensionError(f"gain is {k.shape[0]}x{k.shape[0]}, nodes have dimension {n}")
        phi = graph.offsets.get((i, j), 0.0) if offsets else 0.0
        rot = np.eye(n)
        if phi != 0.0:
            if n != 2:
                raise ParameterError("phase offsets need planar (2-D) nodes")
            rot = rotation_matrix(phi)
        big[i * n:(i + 1) * n, i * n:(i + 1) * n] += k
        big[i * n:(i + 1) * n, j * n:(j + 1) * n] -= k @ rot
    return big


@dataclass(frozen=True)
class BlockLaplacian:
    """Block Laplacian ``L`` (zero offsets), its symmetric part and spectrum.

    ``eigenvalues`` of ``LK`` are sorted non-increasing; ``V`` has
    orthonormal rows spanning the complement of the synchronization subspace.
    """

    n_nodes: int
    node_dim: int
    L: np.ndarray
    LK: np.ndarray
    eigenvalues: np.ndarray
    connected: bool
    kernel_dim: int
    V: np.ndarray
    projected_min: float

    def eigenvalue(self, index):
        """``index``-th eigenvalue (1-based) in non-increasing order."""
        return float(self.eigenvalues[index - 1])

    @property
    def lambda_n1(self):
        return self.eigenvalue(self.n_nodes + 1)

    def write_spectrum_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue"])
            for i, v in enumerate(self.eigenvalues, start=1):
                w.writerow([i, repr(float(v))])


def assemble_block_laplacian(graph: CouplingGraph, node_dim: Optional[int] = None
                             ) -> BlockLaplacian:
    n = node_dim or graph.node_dim or 1
    big = laplacian_matrix(graph, n, offsets=False)
    lk = 0.5 * (big + big.T)
    ev = np.linalg.eigvalsh(lk)[::-1]
    scale = max(1.0, float(np.max(np.abs(ev))))
    kernel = int(np.sum(np.abs(ev) <= KERNEL_TOL * scale))
    if graph.n_nodes > 1:
        v = np.kron(helmert(graph.n_nodes), np.eye(n))
        proj_min = float(np.linalg.eigvalsh(v @ lk @ v.T)[0])
    else:
        v = np.zeros((0, n))
        proj_min = float("inf")
    return BlockLaplacian(graph.n_nodes, n, big, lk, ev, graph.is_connected(), kernel, v, proj_min)


@dataclass(frozen=True)
class HeterogeneousParams:
    """Nominal oscillator and one (possibly different) oscillator per node."""

    nominal: object
    per_node: tuple

    def __post_init__(self):
        object.__setattr__(self, "per_node", tuple(self.per_node))
        for osc in self.per_node:
            if type(osc) is not type(self.nominal) or osc.dim != self.nominal.dim:
                raise ParameterError("per-node oscillators must match the nominal kind")

    @classmethod
    def homogeneous(cls, osc, n_nodes):
        return cls(osc, (osc,) * n_nodes)


@dataclass(frozen=True)
class InhibitionRule:
    """Contracting pull ``weight * gain * (goal - x_i)`` on selected nodes.

    ``schedule`` is a sequence of ``(start, stop)`` enable windows (``None``
    means always enabled). ``mode``: ``"latch"`` arms once the enabled node
    enters ``|goal - x_i| <= radius`` and holds while enabled; ``"strict"``
    acts only inside that disk; ``"always"`` acts whenever enabled.
    """

    nodes: tuple
    goal: np.ndarray
    radius: float = 0.3
    gain: float = 1.0
    weights: Optional[tuple] = None
    schedule: Optional[tuple] = None
    mode: str = "latch"

    def __post_init__(self):
        nodes = tuple(int(i) for i in np.atleast_1d(self.nodes))
        object.__setattr__(self, "nodes", nodes)
        goal = np.asarray(self.goal, dtype=float)
        if goal.ndim == 1:
            goal = np.broadcast_to(goal, (len(nodes), goal.size)).copy()
        if goal.shape[0] != len(nodes):
            raise ParameterError("need one goal per inhibited node")
        object.__setattr__(self, "goal", goal)
        w = (1.0,) * len(nodes) if self.weights is None else tuple(map(float, self.weights))
        if len(w) != len(nodes):
            raise ParameterError("need one weight per inhibited node")
        if any(v < 0 for v in w):
            raise ParameterError("inhibition weights must be nonnegative")
        object.__setattr__(self, "weights", w)
        if not self.radius > 0 or not self.gain > 0:
            raise ParameterError("radius and gain must be positive")
        if self.mode not in ("latch", "strict", "always"):
            raise ParameterError(f"unknown inhibition mode {self.mode!r}")
        if self.schedule is not None:
            object.__setattr__(self, "schedule",
                               tuple((float(a), float(b)) for a, b in self.schedule))

    def enabled(self, t):
        if self.schedule is None:
            return True
        return any(a <= t < b for a, b in self.schedule)

    def inside(self, k, xi):
        return float(np.linalg.norm(self.goal[k] - xi)) <= self.radius

    def pull(self, k, xi):
        return self.weights[k] * self.gain * (self.goal[k] - xi)


def _node_oscillators(oscillators, n_nodes, hetero):
    if hetero is not None:
        oscs = list(hetero.per_node)
    elif isinstance(oscillators, HeterogeneousParams):
        oscs = list(oscillators.per_node)
    elif isinstance(oscillators, (list, tuple)):
        oscs = list(oscillators)
    else:
        oscs = [oscillators] * n_nodes
    if len(oscs) != n_nodes:
        raise ParameterError(f"{len(oscs)} oscillators for {n_nodes} nodes")
    if len({o.dim for o in oscs}) != 1:
        raise DimensionError("all nodes must share one state dimension")
    return oscs


def _vectorized(oscs):
    """One oscillator with per-node parameter arrays, or ``None``.

    Works for dataclass oscillators of one type whose numeric parameters
    broadcast against node-shaped states; the result is checked against the
    per-node evaluation once.
    """
    first = oscs[0]
    if not dataclasses.is_dataclass(first) or any(type(o) is not type(first) for o in oscs):
        return None
    params = {}
    for f in dataclasses.fields(first):
        vals = [getattr(o, f.name) for o in oscs]
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            params[f.name] = np.array(vals, dtype=float)
        elif any(v != vals[0] for v in vals):
            return None
    try:
        vec = dataclasses.replace(first, **params)
        probe = np.random.default_rng(0).uniform(-1.5, 1.5, (3, len(oscs), first.dim))
        ref = np.stack([o.rhs(probe[:, i]) for i, o in enumerate(oscs)], axis=-2)
        ref_j = np.stack([o.jacobian(probe[:, i]) for i, o in enumerate(oscs)], axis=-3)
        if np.allclose(vec.rhs(probe), ref, rtol=1e-13, atol=1e-13) and \
                np.allclose(vec.jacobian(probe), ref_j, rtol=1e-13, atol=1e-13):
            return vec
    except (TypeError, ValueError, AttributeError):
        pass
    return None


def _stacked(oscs):
    """Batched rhs and Jacobian over node-shaped states ``(..., N, n)``."""
    same = all(o is oscs[0] for o in oscs)
    vec = None if same else _vectorized(oscs)
    if vec is not None:
        return vec.rhs, vec.jacobian

    def rhs(xn):
        if same:
            return oscs[0].rhs(xn)
        return np.stack([o.rhs(xn[..., i, :]) for i, o in enumerate(oscs)], axis=-2)

    def jac(xn):
        if same:
            return oscs[0].jacobian(xn)
        return np.stack([o.jacobian(xn[..., i, :]) for i, o in enumerate(oscs)], axis=-3)

    return rhs, jac


def _block_diag(blocks):
    """``(..., N, n, n)`` -> ``(..., N n, N n)``."""
    n_nodes, n = blocks.shape[-3], blocks.shape[-1]
    out = np.zeros(blocks.shape[:-3] + (n_nodes * n, n_nodes * n))
    for i in range(n_nodes):
        out[..., i * n:(i + 1) * n, i * n:(i + 1) * n] = blocks[..., i, :, :]
    return out


def coupled_canonical_field(graph: CouplingGraph, oscillators, hetero=None,
                            inhibition: Union[None, InhibitionRule, Sequence[InhibitionRule]] = None,
                            name="network") -> VectorField:
    """``x_i' = f_i(x_i) + sum_j K_ij (R(phi_ij) x_j - x_i) + inhibition``.

    Inhibition rules that depend on a schedule or a region make the field
    switched; the discrete mode holds one flag per (rule, node) pair and is
    advanced by the integrator after each step.
    """
    n_nodes = graph.n_nodes
    oscs = _node_oscillators(oscillators, n_nodes, hetero)
    n = oscs[0].dim
    if graph.has_offsets and not all(getattr(o, "rotation_invariant", False) for o in oscs):
        raise ParameterError("phase offsets need rotation-invariant oscillators")
    lap = laplacian_matrix(graph, n) if graph.gains else np.zeros((n_nodes * n,) * 2)
    rhs, jac = _stacked(oscs)
    rules = [] if inhibition is None else (
        [inhibition] if isinstance(inhibition, InhibitionRule) else list(inhibition))
    slots = []
    for r_idx, rule in enumerate(rules):
        for k, node in enumerate(rule.nodes):
            if not 0 <= node < n_nodes:
                raise ParameterError(f"inhibition targets missing node {node}")
            if rule.goal.shape[1] != n:
                raise DimensionError("inhibition goal dimension differs from node dimension")
            slots.append((r_idx, k, node))

    def base(x):
        xn = x.reshape(x.shape[:-1] + (n_nodes, n))
        return rhs(xn).reshape(x.shape) - x @ lap.T

    def base_jac(x):
        xn = x.reshape(x.shape[:-1] + (n_nodes, n))
        return _block_diag(jac(xn)) - lap

    def add_pull(out, x, active):
        for flag, (r_idx, k, node) in zip(active, slots):
            if flag:
                rule = rules[r_idx]
                sl = slice(node * n, (node + 1) * n)
                out[..., sl] += rule.pull(k, x[..., sl])
        return out

    def add_pull_jac(out, active):
        for flag, (r_idx, k, node) in zip(active, slots):
            if flag:
                rule = rules[r_idx]
                sl = slice(node * n, (node + 1) * n)
                out[..., sl, sl] -= rule.weights[k] * rule.gain * np.eye(n)
        return out

    static = all(rules[r].mode == "always" and rules[r].schedule is None for r, _, _ in slots)
    if not slots or static:
        on = (True,) * len(slots)
        return VectorField(
            n_nodes * n, lambda x, t=0.0: add_pull(base(x), x, on),
            lambda x, t=0.0: add_pull_jac(base_jac(x), on), name=name)

    def node_state(x, node):
        return x[node * n:(node + 1) * n]

    def initial(t, x):
        out = []
        for r_idx, k, node in slots:
            rule = rules[r_idx]
            out.append(rule.enabled(t) and (rule.mode == "always"
                                            or rule.inside(k, node_state(x, node))))
        return tuple(out)

    def update(mode, t, x):
        out = []
        for flag, (r_idx, k, node) in zip(mode, slots):
            rule = rules[r_idx]
            if not rule.enabled(t):
                out.append(False)
            elif rule.mode == "always" or (rule.mode == "latch" and flag):
                out.append(True)
            else:
                out.append(rule.inside(k, node_state(x, node)))
        return tuple(out)

    def indicators(t, x):
        return {f"region{node}": rules[r].radius - float(
            np.linalg.norm(rules[r].goal[k] - node_state(x, node)))
            for r, k, node in slots}

    labels = tuple(f"inhibit{node}" for _, _, node in slots)
    return VectorField(
        n_nodes * n, lambda x, t, mode: add_pull(base(x), x, mode),
        lambda x, t, mode: add_pull_jac(base_jac(x), mode), name=name,
        switching=Switching(labels, initial, update, indicators))


def heterogeneity_disturbance(hetero: HeterogeneousParams, states):
    """``d_i = f(x_i, w_i) - f(x_i, w_0)`` along node-stacked states ``(..., N n)``.

    Returns the per-node mismatch ``(..., N, n)`` and its sup norm over time
    (norm of the stacked vector).
    """
    states = np.asarray(states, dtype=float)
    n_nodes, n = len(hetero.per_node), hetero.nominal.dim
    xn = states.reshape(states.shape[:-1] + (n_nodes, n))
    d = np.stack([o.rhs(xn[..., i, :]) - hetero.nominal.rhs(xn[..., i, :])
                  for i, o in enumerate(hetero.per_node)], axis=-2)
    flat = d.reshape(d.shape[:-2] + (n_nodes * n,))
    return d, float(np.max(np.linalg.norm(flat, axis=-1)))


@dataclass(frozen=True)
class ThresholdEstimate:
    """``alpha0 = beta / (2 rate)``, a sampled estimate (not an upper bound proof)."""

    alpha0: float
    beta: float
    rate: float
    witness: tuple
    n_samples: int
    note: str = "sampled estimate over the listed region; not a proof"


def inhibition_threshold_estimate(f1, g, sampler: RegionSampler,
                                  metric: Optional[Metric] = None) -> ThresholdEstimate:
    """Smallest sampled ``alpha`` beyond which ``f1 + alpha g`` contracts on the region.

    ``beta`` is the largest eigenvalue, relative to ``M``, of
    ``dM/dx . f1 + A1^T M + M A1`` over the samples; ``rate`` is the
    sampled contraction rate of ``g``.
    """
    metric = metric or Metric.identity(g.dim)
    rate = certified_rate(g, metric, sampler)
    if rate <= 0:
        raise NotContractingError(
            f"g is not contracting on {sampler.describe()} (sampled rate {rate:.4g})")
    xs = sampler.samples()
    margins, _ = contraction_margins(f1, metric, xs)
    i = int(np.argmax(margins))
    beta = float(margins[i])
    return ThresholdEstimate(beta / (2.0 * rate), beta, rate, tuple(xs[i]), len(xs))


def inhibition_matrix(n_nodes, node_dim, alphas, gains=1.0):
    """Block diagonal ``-alpha_i k_i I`` (Jacobian of the inhibition pulls)."""
    a = np.asarray(alphas, dtype=float) * np.broadcast_to(np.asarray(gains, float), (n_nodes,))
    return -np.kron(np.diag(a), np.eye(node_dim))


def weighted_inhibition_field(graph: CouplingGraph, rule: InhibitionRule, alphas=None,
                              oscillators=None, node_dim: Optional[int] = None):
    """Standalone ``f_inh = -L x + [alpha_i g_i(x_i)]`` and optionally ``F_x + f_inh``.

    ``alphas`` (one per node, default from ``rule.weights``) scale the pulls
    ``g_i = gain (goal_i - x_i)``; nodes outside ``rule.nodes`` use the
    first goal. Returns ``(f_inh, combined)`` with ``combined`` ``None``
    when no oscillators are given.
    """
    n_nodes = graph.n_nodes
    n = node_dim or graph.node_dim or rule.goal.shape[1]
    if alphas is None:
        alphas = np.zeros(n_nodes)
        for k, node in enumerate(rule.nodes):
            alphas[node] = rule.weights[k]
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (n_nodes,):
        raise ParameterError("need one weight per node")
    if np.any(alphas < 0):
        raise ParameterError("inhibition weights must be nonnegative")
    goals = np.broadcast_to(rule.goal[0], (n_nodes, n)).copy()
    for k, node in enumerate(rule.nodes):
        goals[node] = rule.goal[k]
    lap = laplacian_matrix(graph, n) if graph.gains else np.zeros((n_nodes * n,) * 2)
    jac_inh = -lap + inhibition_matrix(n_nodes, n, alphas, rule.gain)
    offset = (np.repeat(alphas, n) * rule.gain) * goals.reshape(-1)

    def f_inh(x, t=0.0):
        return x @ jac_inh.T + offset

    def j_inh(x, t=0.0):
        return np.broadcast_to(jac_inh, np.shape(x)[:-1] + jac_inh.shape).copy()

    inh = VectorField(n_nodes * n, f_inh, j_inh, name="f_inh")
    if oscillators is None:
        return inh, None
    oscs = _node_oscillators(oscillators, n_nodes, None)
    rhs, jac = _stacked(oscs)

    def comb(x, t=0.0):
        return rhs(x.reshape(x.shape[:-1] + (n_nodes, n))).reshape(x.shape) + f_inh(x)

    def comb_jac(x, t=0.0):
        return _block_diag(jac(x.reshape(x.shape[:-1] + (n_nodes, n)))) + jac_inh

    return inh, VectorField(n_nodes * n, comb, comb_jac, name="network+f_inh")


def check_sparse_inhibition(graph: CouplingGraph, rule: InhibitionRule, oscillator=None,
                            node_sampler: Optional[RegionSampler] = None) -> Certificate:
    """Certify that ``f_inh`` contracts in the identity metric.

    ``f_inh`` has a constant Jacobian, so one eigenvalue computation covers
    the whole state space. In directed mode the check also requires every
    node to be reachable from an inhibited node. With an oscillator and a
    node-level sampler, the details include the network threshold
    ``alpha0 = beta / (2 rate)`` for ``F_x + alpha f_inh``; the present gains
    suffice when ``alpha0 < 1``.
    """
    inh, _ = weighted_inhibition_field(graph, rule)
    jac = inh.jacobian(np.zeros(inh.dim))
    lam = float(np.linalg.eigvalsh(0.5 * (jac + jac.T))[-1])
    reach = set()
    for node in rule.nodes:
        reach |= graph.reachable_from(node)
    all_reached = len(reach) == graph.n_nodes
    details = {"reachable_from_inhibited": sorted(reach), "all_reachable": all_reached,
               "connected": graph.is_connected()}
    passed = lam < 0 and (all_reached if graph.directed else graph.is_connected())
    if oscillator is not None and node_sampler is not None:
        xs = node_sampler.samples()
        a = oscillator.jacobian(xs)
        beta = float(np.max(np.linalg.eigvalsh(a + np.swapaxes(a, -1, -2))[..., -1]))
        details["beta"] = beta
        details["alpha0_network"] = beta / (2.0 * -lam) if lam < 0 else float("inf")
        details["network_contracting"] = bool(lam < 0 and details["alpha0_network"] < 1.0)
    rate = max(-lam, 0.0)
    return Certificate(kind="contraction", rate=rate, worst_margin=2.0 * (lam + rate), witness=(),
                       n_samples=1, passed=bool(passed), metric="identity", field="f_inh",
                       region="whole space (constant Jacobian)", details=details)

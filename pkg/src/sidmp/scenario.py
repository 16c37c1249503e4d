"""Scenario documents: parsing, model assembly and pipeline execution.

A scenario is one JSON object with the sections ``systems``, ``graph``,
``heterogeneity``, ``inhibition``, ``integrator``, ``pipeline`` and
``outputs`` (plus optional ``name``, ``description`` and ``seed``). The
full schema is documented in ``docs/scenario-format.md``.
"""
from __future__ import annotations

import contextlib
import dataclasses
import importlib.resources
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .contraction import (
    Certificate,
    Metric,
    RegionSampler,
    check_contraction,
    check_sync_condition,
    check_transverse_contraction,
)
from .dynamics import (
    ExponentialPhase,
    GaussianForcing,
    Hopf,
    ReferenceSystem,
    TransformationSystem,
    VanDerPol,
    VectorField,
    VonMisesForcing,
    compose_hierarchy,
)
from .errors import ConfigError, NotPeriodicError, SidmpError
from .learning import (
    Demonstration,
    compute_target_forcing,
    demonstration_from_system,
    fit_weights,
    weights_to_config,
)
from .network import (
    CouplingGraph,
    HeterogeneousParams,
    InhibitionRule,
    assemble_block_laplacian,
    check_sparse_inhibition,
    coupled_canonical_field,
    inhibition_threshold_estimate,
)
from .simulate import (
    IntegratorConfig,
    Trajectory,
    estimate_period,
    integrate,
    oscillation_amplitude,
    sync_error,
    write_events_csv,
    write_trajectory_csv,
)

log = logging.getLogger(__name__)

SECTIONS = ("name", "description", "seed", "systems", "graph", "heterogeneity",
            "inhibition", "integrator", "pipeline", "outputs")
SIMULATION_OPS = ("simulate", "period", "sync_error", "amplitude", "recovery", "phase_offsets")
CERTIFY_OPS = ("certify", "threshold", "spectrum")
LEARN_OPS = ("learn",)
ALL_OPS = SIMULATION_OPS + CERTIFY_OPS + LEARN_OPS
_MISSING = object()


# ---------------------------------------------------------------------------
# config access with location-aware diagnostics


class Section:
    """Read-only view of a JSON object that reports bad fields by path."""

    def __init__(self, data, where):
        if not isinstance(data, dict):
            raise ConfigError(f"expected an object, got {type(data).__name__}", where)
        self.data = data
        self.where = where

    def path(self, key):
        return f"{self.where}.{key}" if self.where else str(key)

    def __contains__(self, key):
        return key in self.data

    def allow(self, *keys):
        extra = sorted(set(self.data) - set(keys))
        if extra:
            raise ConfigError(f"unknown field(s) {extra}; allowed: {sorted(keys)}",
                              self.path(extra[0]))
        return self

    def raw(self, key, default=_MISSING):
        if key not in self.data or self.data[key] is None:
            if default is _MISSING:
                raise ConfigError("required field is missing", self.path(key))
            return default
        return self.data[key]

    def num(self, key, default=_MISSING, positive=False, nonneg=False):
        v = self.raw(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"expected a number, got {v!r}", self.path(key))
        v = float(v)
        if not np.isfinite(v):
            raise ConfigError("must be finite", self.path(key))
        if positive and v <= 0:
            raise ConfigError(f"must be positive, got {v}", self.path(key))
        if nonneg and v < 0:
            raise ConfigError(f"must be nonnegative, got {v}", self.path(key))
        return v

    def integer(self, key, default=_MISSING, minimum=None):
        v = self.raw(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"expected an integer, got {v!r}", self.path(key))
        if minimum is not None and v < minimum:
            raise ConfigError(f"must be at least {minimum}, got {v}", self.path(key))
        return int(v)

    def flag(self, key, default=_MISSING):
        v = self.raw(key, default)
        if not isinstance(v, bool):
            raise ConfigError(f"expected true or false, got {v!r}", self.path(key))
        return v

    def text(self, key, default=_MISSING, choices=None):
        v = self.raw(key, default)
        if v is None:
            return None
        if not isinstance(v, str):
            raise ConfigError(f"expected a string, got {v!r}", self.path(key))
        if choices is not None and v not in choices:
            raise ConfigError(f"{v!r} is not one of {list(choices)}", self.path(key))
        return v

    def array(self, key, default=_MISSING, shape=None):
        v = self.raw(key, default)
        if v is None:
            return None
        try:
            a = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"expected a numeric array, got {v!r}", self.path(key)) from None
        if not np.all(np.isfinite(a)):
            raise ConfigError("array entries must be finite", self.path(key))
        if shape is not None:
            want = tuple(shape)
            if a.ndim != len(want) or any(w is not None and w != s for w, s in zip(want, a.shape)):
                raise ConfigError(f"expected shape {want}, got {a.shape}", self.path(key))
        return a

    def child(self, key, default=_MISSING):
        v = self.raw(key, default)
        if v is None or isinstance(v, Section):
            return v
        return Section(v, self.path(key))

    def items(self, key, default=_MISSING):
        v = self.raw(key, default)
        if v is None:
            return []
        if isinstance(v, dict):
            return [Section(v, self.path(key))]
        if not isinstance(v, list):
            raise ConfigError("expected a list of objects", self.path(key))
        return [Section(e, f"{self.path(key)}[{i}]") for i, e in enumerate(v)]


@contextlib.contextmanager
def _building(where):
    """Re-raise library parameter errors as config errors at ``where``."""
    try:
        yield
    except ConfigError:
        raise
    except (SidmpError, ValueError) as exc:
        raise ConfigError(str(exc), where) from None


# ---------------------------------------------------------------------------
# model assembly


def build_canonical(sec: Section):
    kind = sec.text("kind", choices=("hopf", "vanderpol", "exponential"))
    with _building(sec.where):
        if kind == "hopf":
            sec.allow("kind", "omega", "rho", "radius", "tau")
            return Hopf(omega=sec.num("omega", 2 * np.pi), rho=sec.num("rho", 1.0),
                        radius=sec.num("radius", 1.0), tau=sec.num("tau", 1.0))
        if kind == "vanderpol":
            sec.allow("kind", "omega", "mu", "classical")
            return VanDerPol(omega=sec.num("omega", 1.0), mu=sec.num("mu", 1.0),
                             classical=sec.flag("classical", False))
        sec.allow("kind", "alpha_x", "tau")
        return ExponentialPhase(alpha_x=sec.num("alpha_x", 1.0), tau=sec.num("tau", 1.0))


def _param_names(osc):
    return [f.name for f in dataclasses.fields(osc) if f.name != "classical"]


def build_heterogeneity(sec: Optional[Section], nominal, n_nodes):
    """Per-node oscillators from absolute overrides and multiplicative scales."""
    if sec is None:
        return HeterogeneousParams.homogeneous(nominal, n_nodes)
    sec.allow("per_node", "scale")
    names = _param_names(nominal)
    params = [dict() for _ in range(n_nodes)]
    scale = sec.child("scale", None)
    if scale is not None:
        scale.allow(*names)
        for name in scale.data:
            vals = scale.array(name, shape=(n_nodes,))
            for i in range(n_nodes):
                params[i][name] = float(getattr(nominal, name)) * vals[i]
    per = sec.items("per_node", None)
    if per and len(per) != n_nodes:
        raise ConfigError(f"need {n_nodes} entries, got {len(per)}", sec.path("per_node"))
    for i, entry in enumerate(per):
        entry.allow(*names)
        for name in entry.data:
            params[i][name] = entry.num(name)
    with _building(sec.where):
        nodes = tuple(dataclasses.replace(nominal, **p) for p in params)
        return HeterogeneousParams(nominal, nodes)


def build_graph(sec: Optional[Section], node_dim):
    """Coupling graph; ``None`` gives one uncoupled node."""
    if sec is None:
        return CouplingGraph(1, {}), ["n0"]
    sec.allow("nodes", "topology", "edges", "gain", "directed", "phases", "offsets",
              "node_names")
    n = sec.integer("nodes", minimum=1)
    names = sec.raw("node_names", [f"n{i}" for i in range(n)])
    if not isinstance(names, list) or len(names) != n or not all(isinstance(s, str) for s in names):
        raise ConfigError(f"need {n} node names", sec.path("node_names"))
    topology = sec.text("topology", "all_to_all", choices=("all_to_all", "edges", "none"))
    gain = sec.array("gain", 1.0)
    if gain.ndim == 0:
        gain = float(gain) * np.eye(node_dim)
    if gain.shape != (node_dim, node_dim):
        raise ConfigError(f"gain must be a scalar or {node_dim}x{node_dim}", sec.path("gain"))
    phases = sec.array("phases", None, shape=(n,))
    with _building(sec.where):
        if topology == "none":
            return CouplingGraph(n, {}), names
        if topology == "all_to_all":
            if "edges" in sec or "offsets" in sec:
                raise ConfigError("all_to_all takes 'phases', not edges or offsets", sec.where)
            return CouplingGraph.all_to_all(n, gain, phases), names
        edges = sec.raw("edges")
        try:
            edges = [(int(i), int(j)) for i, j in edges]
        except (TypeError, ValueError):
            raise ConfigError("edges must be [i, j] pairs", sec.path("edges")) from None
        offsets = {}
        if phases is not None:
            offsets = {(i, j): phases[i] - phases[j] for i, j in edges}
        for entry in sec.raw("offsets", []):
            try:
                i, j, p = entry
                offsets[(int(i), int(j))] = float(p)
            except (TypeError, ValueError):
                raise ConfigError("offsets must be [i, j, phi] triples",
                                  sec.path("offsets")) from None
        return CouplingGraph.from_edges(n, edges, gain, offsets,
                                        directed=sec.flag("directed", False)), names


def build_inhibition(raw, where):
    if raw is None:
        return []
    if isinstance(raw, dict):
        items = [Section(raw, where)]
    elif isinstance(raw, list):
        items = [Section(e, f"{where}[{i}]") for i, e in enumerate(raw)]
    else:
        raise ConfigError("expected a rule object or a list of rules", where)
    rules = []
    for item in items:
        item.allow("nodes", "goal", "radius", "gain", "weights", "schedule", "mode")
        nodes = item.raw("nodes")
        nodes = [nodes] if isinstance(nodes, int) else nodes
        schedule = item.raw("schedule", None)
        if schedule is not None:
            arr = item.array("schedule")
            if arr.ndim != 2 or arr.shape[1] != 2 or np.any(arr[:, 1] <= arr[:, 0]):
                raise ConfigError("schedule must be a list of [start, stop] with stop > start",
                                  item.path("schedule"))
            schedule = [tuple(r) for r in arr]
        with _building(item.where):
            rules.append(InhibitionRule(
                nodes=tuple(nodes), goal=item.array("goal"),
                radius=item.num("radius", 0.3, positive=True),
                gain=item.num("gain", 1.0, positive=True),
                weights=item.raw("weights", None), schedule=schedule,
                mode=item.text("mode", "latch", choices=("latch", "strict", "always"))))
    return rules


def harmonic_goal(offset, amplitude, terms, reference_index=None):
    """``g(x, r) = c + a(r) s(theta(x))`` and its rate along the phase.

    ``terms[m][h] = (a_h, b_h)`` gives ``s_m(theta) = sum_h a_h cos(h theta)
    + b_h sin(h theta)`` with ``h`` starting at one; ``a(r)`` is
    ``amplitude * r[reference_index]`` or just ``amplitude``.
    """
    c = np.asarray(offset, dtype=float)
    a = np.asarray(amplitude, dtype=float)
    m = c.size
    n_h = max((len(t) for t in terms), default=0)
    coef = np.zeros((m, n_h, 2))
    for j, t in enumerate(terms):
        if len(t):
            coef[j, :len(t)] = np.asarray(t, dtype=float)
    h = np.arange(1, n_h + 1, dtype=float)
    cos_w, sin_w = coef[:, :, 0].T.copy(), coef[:, :, 1].T.copy()
    d_sin, d_cos = -cos_w * h[:, None], sin_w * h[:, None]

    def scale(r):
        if reference_index is None:
            return a
        return a * r[..., reference_index:reference_index + 1]

    def basis(x):
        th = np.multiply.outer(np.arctan2(x[..., 1], x[..., 0]), h)
        return np.cos(th), np.sin(th)

    def goal(x, r):
        cs, sn = basis(x)
        return c + scale(r) * (cs @ cos_w + sn @ sin_w)

    def goal_rate(x, xdot, r):
        rr = x[..., 0] ** 2 + x[..., 1] ** 2
        thdot = (x[..., 0] * xdot[..., 1] - x[..., 1] * xdot[..., 0]) / rr
        cs, sn = basis(x)
        return scale(r) * (sn @ d_sin + cs @ d_cos) * thdot[..., None]

    return goal, goal_rate


def build_forcing(sec: Section, dim):
    sec.allow("kind", "centers", "width", "weights")
    kind = sec.text("kind", choices=("gaussian", "von-mises"))
    with _building(sec.where):
        cls = GaussianForcing if kind == "gaussian" else VonMisesForcing
        w = sec.array("weights")
        if dim == 1 and kind == "gaussian" and w.ndim == 2 and w.shape[1] == 1:
            w = w[:, 0]
        return cls(sec.array("centers"), sec.num("width", positive=True), w)


def build_transformations(items, n_nodes, node_dim, ref_dim):
    """Transformation systems plus per-system column names."""
    out = []
    for item in items:
        item.allow("node", "nodes", "dim", "joints", "k", "b", "tau", "time_scaled", "goal",
                   "forcing")
        if "nodes" in item:
            nodes = item.raw("nodes")
        else:
            nodes = [item.integer("node", 0)]
        dim = item.integer("dim", 1, minimum=1)
        joints = item.raw("joints", [f"y{j}" for j in range(dim)])
        if len(joints) != dim:
            raise ConfigError(f"need {dim} joint names", item.path("joints"))
        goal, goal_rate = None, None
        gsec = item.child("goal", None)
        if gsec is not None:
            if "constant" in gsec:
                gsec.allow("constant")
                goal = gsec.array("constant", shape=(dim,))
            else:
                gsec.allow("harmonics")
                hs = gsec.child("harmonics")
                hs.allow("offset", "amplitude", "terms", "reference_index")
                ridx = hs.integer("reference_index", None, minimum=0)
                if ridx is not None and ridx >= ref_dim:
                    raise ConfigError(f"reference has {ref_dim} entries",
                                      hs.path("reference_index"))
                if node_dim != 2:
                    raise ConfigError("harmonic goals need planar canonical nodes", hs.where)
                terms = hs.raw("terms")
                if not isinstance(terms, list) or len(terms) != dim:
                    raise ConfigError(f"need {dim} term lists", hs.path("terms"))
                goal, goal_rate = harmonic_goal(
                    hs.array("offset", shape=(dim,)), hs.array("amplitude", shape=(dim,)),
                    terms, ridx)
        fsec = item.child("forcing", None)
        forcing = build_forcing(fsec, dim) if fsec is not None else None
        for node in nodes:
            if not isinstance(node, int) or not 0 <= node < n_nodes:
                raise ConfigError(f"no canonical node {node!r}", item.path("nodes"))
            with _building(item.where):
                tr = TransformationSystem(
                    k=item.array("k"), b=item.array("b"), tau=item.num("tau", 1.0),
                    dim=dim, forcing=forcing, goal=goal, goal_rate=goal_rate, node=node,
                    time_scaled=item.flag("time_scaled", False))
            out.append((tr, list(joints)))
    return out


def build_region(sec: Section, dim, samples_override=None, seed=0):
    sec.allow("kind", "center", "radius", "inner", "outer", "low", "high", "points",
              "n_samples", "boundary", "include_center", "seed")
    kind = sec.text("kind", choices=("ball", "annulus", "box", "points"))
    n = samples_override or sec.integer("n_samples", 4096, minimum=1)
    seed = sec.integer("seed", seed)
    with _building(sec.where):
        if kind == "ball":
            return RegionSampler.ball(sec.array("center", np.zeros(dim), shape=(dim,)),
                                      sec.num("radius", positive=True), n, seed,
                                      boundary=sec.integer("boundary", 0, minimum=0),
                                      include_center=sec.flag("include_center", True))
        if kind == "annulus":
            return RegionSampler.annulus(sec.array("center", np.zeros(dim), shape=(dim,)),
                                         sec.num("inner", nonneg=True),
                                         sec.num("outer", positive=True), n, seed,
                                         boundary=sec.integer("boundary", 0, minimum=0))
        if kind == "box":
            return RegionSampler.box(sec.array("low", shape=(dim,)),
                                     sec.array("high", shape=(dim,)), n, seed)
        return RegionSampler.from_points(sec.array("points", shape=(None, dim)))


def build_metric(raw, dim, where):
    if raw is None or raw == "identity":
        return Metric.identity(dim)
    sec = Section(raw, where).allow("matrix")
    m = sec.array("matrix", shape=(dim, dim))
    with _building(where):
        return Metric.from_matrix(m)


# ---------------------------------------------------------------------------
# the scenario object


@dataclass
class Scenario:
    """Parsed scenario: model parts plus the raw pipeline and output switches."""

    name: str
    description: str
    seed: int
    nominal: object
    hetero: HeterogeneousParams
    graph: CouplingGraph
    node_names: list
    inhibition: list
    reference: Optional[ReferenceSystem]
    transformations: list
    integrator: Section
    pipeline: list
    outputs: dict
    source: Optional[Path] = None

    @property
    def n_nodes(self):
        return self.graph.n_nodes

    @property
    def node_dim(self):
        return self.nominal.dim

    def network_field(self, coupling=True, inhibition=True):
        graph = self.graph if coupling else CouplingGraph(self.n_nodes, {})
        rules = self.inhibition if inhibition else None
        return coupled_canonical_field(graph, self.hetero.per_node, inhibition=rules or None,
                                       name=self.name)

    def full_field(self, coupling=True, inhibition=True):
        net = self.network_field(coupling, inhibition)
        if not self.transformations:
            return net
        ref = self.reference or ReferenceSystem(1.0, [1.0])
        return compose_hierarchy(ref, net, [tr for tr, _ in self.transformations],
                                 node_dim=self.node_dim)

    def columns(self):
        n = self.node_dim
        cols = [f"{nm}_x{k + 1}" for nm in self.node_names for k in range(n)]
        if not self.transformations:
            return cols
        ref = self.reference or ReferenceSystem(1.0, [1.0])
        out = [f"r{k}" for k in range(ref.dim)] + cols
        for tr, joints in self.transformations:
            node = self.node_names[tr.node]
            out += [f"{node}_{j}" for j in joints] + [f"{node}_{j}_v" for j in joints]
        return out


def _parse_json(text, where):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", f"{where}:{exc.lineno}:{exc.colno}") from None


def bundled_scenarios():
    """Names of the scenarios shipped with the package."""
    root = importlib.resources.files("sidmp.scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_config(path_or_name):
    """A file path, or the name of a bundled scenario."""
    p = Path(path_or_name)
    if p.is_file():
        return p, p.read_text()
    name = str(path_or_name)
    name = name[:-5] if name.endswith(".json") else name
    res = importlib.resources.files("sidmp.scenarios") / f"{name}.json"
    if res.is_file():
        return None, res.read_text()
    raise ConfigError(f"no such file or bundled scenario (bundled: {bundled_scenarios()})",
                      str(path_or_name))


def load_scenario(path_or_name, seed: Optional[int] = None) -> Scenario:
    """Parse and validate a scenario document; all config errors surface here."""
    path, text = resolve_config(path_or_name)
    where = str(path) if path is not None else f"<bundled {path_or_name}>"
    doc = Section(_parse_json(text, where), "")
    doc.allow(*SECTIONS)
    name = doc.text("name", path.stem if path is not None else str(path_or_name))
    systems = doc.child("systems")
    systems.allow("canonical", "reference", "transformations")
    nominal = build_canonical(systems.child("canonical"))
    graph, names = build_graph(doc.child("graph", None), nominal.dim)
    hetero = build_heterogeneity(doc.child("heterogeneity", None), nominal, graph.n_nodes)
    rules = build_inhibition(doc.raw("inhibition", None), "inhibition")
    for i, rule in enumerate(rules):
        if any(n >= graph.n_nodes for n in rule.nodes):
            raise ConfigError(f"rule targets a node outside 0..{graph.n_nodes - 1}",
                              f"inhibition[{i}].nodes")
        if rule.goal.shape[1] != nominal.dim:
            raise ConfigError(f"goal must have {nominal.dim} entries", f"inhibition[{i}].goal")
    reference = None
    rsec = systems.child("reference", None)
    if rsec is not None:
        rsec.allow("gain", "command")
        with _building(rsec.where):
            reference = ReferenceSystem(rsec.array("gain"), rsec.array("command"))
    ref_dim = reference.dim if reference is not None else 1
    transforms = build_transformations(systems.items("transformations", None), graph.n_nodes,
                                       nominal.dim, ref_dim)
    integ = doc.child("integrator", None) or Section({}, "integrator")
    integ.allow("step", "duration", "record_every", "initial")
    integ.num("step", 1e-3, positive=True)
    integ.num("duration", 10.0, positive=True)
    integ.integer("record_every", 1, minimum=1)
    pipeline = doc.items("pipeline", [])
    for i, step in enumerate(pipeline):
        step.text("op", choices=ALL_OPS)
    labels = [s.raw("label", f"step{i}") for i, s in enumerate(pipeline)]
    if len(set(labels)) != len(labels):
        raise ConfigError("step labels must be unique", "pipeline")
    outputs = doc.child("outputs", None) or Section({}, "outputs")
    outputs.allow("csv", "events", "svg", "json", "summary")
    out_flags = {k: outputs.flag(k, True) for k in ("csv", "events", "svg", "json", "summary")}
    return Scenario(name=name, description=doc.text("description", ""),
                    seed=doc.integer("seed", 0) if seed is None else int(seed),
                    nominal=nominal, hetero=hetero, graph=graph, node_names=names,
                    inhibition=rules, reference=reference, transformations=transforms,
                    integrator=integ, pipeline=pipeline, outputs=out_flags, source=path)


# ---------------------------------------------------------------------------
# execution


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary path next to ``path``; rename onto it on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def write_json(path, obj):
    with atomic_path(path) as tmp, open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return Path(path)


@dataclass
class StepResult:
    label: str
    op: str
    value: Optional[float] = None
    passed: Optional[bool] = None
    details: dict = dataclasses.field(default_factory=dict)
    expect: Optional[dict] = None
    certificate: Optional[Certificate] = None

    def line(self):
        status = {True: "PASS", False: "FAIL", None: "DONE"}[self.passed]
        val = "" if self.value is None else f" value={self.value:.6g}"
        exp = ""
        if self.expect:
            exp = " expect " + ",".join(f"{k}={v:g}" for k, v in sorted(self.expect.items()))
        return f"{status} {self.label} ({self.op}){val}{exp}"

    def to_dict(self):
        d = {"label": self.label, "op": self.op, "value": self.value, "passed": self.passed,
             "details": self.details}
        if self.expect:
            d["expect"] = self.expect
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Runner:
    """Executes a scenario pipeline step by step and writes its artifacts."""

    def __init__(self, scenario: Scenario, out_dir, samples: Optional[int] = None,
                 ops=ALL_OPS, gait: bool = False):
        self.sc = scenario
        self.out_dir = Path(out_dir)
        self.samples = samples
        self.ops = tuple(ops)
        self.gait = gait
        self.trajectories = {}
        self.results = []
        self.files = []

    # -- helpers -----------------------------------------------------------

    def _out(self, name):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        p = self.out_dir / name
        self.files.append(p)
        return p

    def _rng(self):
        return np.random.default_rng(self.sc.seed)

    def initial_state(self, vf, spec: Optional[Section] = None):
        sc = self.sc
        n_x = sc.n_nodes * sc.node_dim
        spec = spec or sc.integrator.child("initial", None) or Section({}, "integrator.initial")
        spec.allow("canonical", "reference", "outputs")
        canon = spec.raw("canonical", {"kind": "uniform", "low": -1.0, "high": 1.0})
        if isinstance(canon, list):
            x = spec.array("canonical", shape=(n_x,))
        else:
            cs = spec.child("canonical")
            kind = cs.text("kind", choices=("uniform", "normal", "phases"))
            rng = self._rng()
            if kind == "uniform":
                cs.allow("kind", "low", "high")
                x = rng.uniform(cs.num("low", -1.0), cs.num("high", 1.0), n_x)
            elif kind == "normal":
                cs.allow("kind", "scale", "mean")
                x = cs.num("mean", 0.0) + cs.num("scale", 1.0, positive=True) * rng.standard_normal(n_x)
            else:
                cs.allow("kind", "radius", "jitter")
                if sc.node_dim != 2:
                    raise ConfigError("'phases' initial states need planar nodes", cs.where)
                with _building(cs.where):
                    psi = sc.graph.node_phases() if sc.graph.gains else np.zeros(sc.n_nodes)
                rad = cs.num("radius", 1.0, positive=True)
                x = np.stack([rad * np.cos(psi), rad * np.sin(psi)], axis=1).reshape(-1)
                x = x + cs.num("jitter", 0.0, nonneg=True) * rng.standard_normal(n_x)
        if vf.blocks is None:
            return x
        ref = sc.reference or ReferenceSystem(1.0, [1.0])
        r0 = spec.array("reference", ref.command_at(0.0), shape=(ref.dim,))
        z = np.zeros(vf.dim)
        z[vf.blocks["r"]] = r0
        z[vf.blocks["x"]] = x
        ys = spec.raw("outputs", None)
        for idx, (tr, _) in enumerate(sc.transformations):
            blk = vf.blocks[f"y{idx}"]
            xn = x[tr.node * sc.node_dim:(tr.node + 1) * sc.node_dim]
            y0 = np.broadcast_to(tr.goal_at(xn, r0), (tr.dim,)) if ys is None else \
                spec.array("outputs")[idx]
            z[blk.start:blk.start + tr.dim] = y0
        return z

    def canonical(self, label, where):
        if label not in self.trajectories:
            raise ConfigError(f"no trajectory labelled {label!r} was simulated before this step",
                              where)
        traj, blocks = self.trajectories[label]
        if blocks is None:
            return traj
        return Trajectory(traj.t, traj.x[:, blocks["x"]], traj.events)

    @staticmethod
    def _event_time(traj, name, where, after=-np.inf):
        times = [t for t in traj.event_times(name) if t >= after]
        if not times:
            raise ConfigError(f"event {name!r} never occurred", where)
        return float(times[0])

    def _expect(self, res: StepResult, sec: Section):
        exp = sec.child("expect", None)
        if exp is None:
            return res
        exp.allow("max", "min")
        bounds = {k: exp.num(k) for k in ("max", "min") if k in exp}
        ok = True
        if "max" in bounds:
            ok &= res.value <= bounds["max"]
        if "min" in bounds:
            ok &= res.value >= bounds["min"]
        res.expect = bounds
        res.passed = bool(ok)
        return res

    # -- operations ----------------------------------------------------------

    def op_simulate(self, sec: Section, label):
        sec.allow("op", "label", "coupling", "inhibition", "duration", "initial", "outputs")
        sc = self.sc
        vf = sc.full_field(coupling=sec.flag("coupling", True),
                           inhibition=sec.flag("inhibition", True))
        if not sec.flag("outputs", True) and vf.blocks is not None:
            vf = sc.network_field(sec.flag("coupling", True), sec.flag("inhibition", True))
        x0 = self.initial_state(vf, sec.child("initial", None))
        cfg = IntegratorConfig(step=sc.integrator.num("step", 1e-3),
                               duration=sec.num("duration", None, positive=True)
                               or sc.integrator.num("duration", 10.0),
                               record_every=sc.integrator.integer("record_every", 1))
        t0 = time.perf_counter()
        traj = integrate(vf, x0, cfg)
        log.info("%s: integrated %d steps in %.2f s", label, cfg.n_steps,
                 time.perf_counter() - t0)
        self.trajectories[label] = (traj, vf.blocks)
        cols = sc.columns() if vf.blocks is not None else \
            [f"{nm}_x{k + 1}" for nm in sc.node_names for k in range(sc.node_dim)]
        if sc.outputs["csv"]:
            with atomic_path(self._out(f"{label}.csv")) as tmp:
                write_trajectory_csv(traj, tmp, cols)
        if sc.outputs["events"] and vf.switching is not None:
            with atomic_path(self._out(f"{label}_events.csv")) as tmp:
                write_events_csv(traj, tmp)
        if sc.outputs["svg"]:
            self._plots(traj, vf.blocks, cols, label)
        return StepResult(label, "simulate", details={
            "steps": cfg.n_steps, "duration": cfg.duration, "dimension": vf.dim,
            "events": [[t, n] for t, n in traj.events]})

    def _plots(self, traj, blocks, cols, label):
        from .plotting import phase_portrait_svg, time_series_svg
        sc = self.sc
        canon = traj if blocks is None else Trajectory(traj.t, traj.x[:, blocks["x"]],
                                                       traj.events)
        ccols = cols if blocks is None else cols[blocks["x"]]
        time_series_svg(canon, self._out(f"{label}_timeseries.svg"), ccols,
                        title=f"{sc.name}: {label}")
        if sc.node_dim >= 2:
            phase_portrait_svg(canon, sc.n_nodes, self._out(f"{label}_phase.svg"),
                               title=f"{sc.name}: {label}", node_names=sc.node_names)
        if blocks is not None:
            pos = [i for i, c in enumerate(cols) if i >= blocks["y"].start and not c.endswith("_v")]
            out = Trajectory(traj.t, traj.x[:, pos], traj.events)
            time_series_svg(out, self._out(f"{label}_outputs.svg"), [cols[i] for i in pos],
                            title=f"{sc.name}: {label} outputs")

    def op_period(self, sec: Section, label):
        sec.allow("op", "label", "trajectory", "transient", "expect")
        traj = self.canonical(sec.text("trajectory"), sec.path("trajectory"))
        n = self.sc.node_dim
        periods, unc = [], []
        for i in range(self.sc.n_nodes):
            normal = np.zeros(traj.x.shape[1])
            normal[i * n] = 1.0
            try:
                est = estimate_period(traj, normal, 0.0, sec.num("transient", 0.0, nonneg=True))
            except NotPeriodicError as exc:
                raise NotPeriodicError(f"{label}: node {self.sc.node_names[i]}: {exc}") from None
            periods.append(est.period)
            unc.append(est.uncertainty)
        p = np.asarray(periods)
        spread = float((p.max() - p.min()) / p.mean())
        return self._expect(StepResult(label, "period", spread, details={
            "periods": p, "uncertainty": unc, "relative_spread": spread}), sec)

    def op_sync_error(self, sec: Section, label):
        sec.allow("op", "label", "trajectory", "window", "expect")
        traj = self.canonical(sec.text("trajectory"), sec.path("trajectory"))
        val = sync_error(traj, self.sc.n_nodes, sec.num("window", None, positive=True))
        return self._expect(StepResult(label, "sync_error", val), sec)

    def _window(self, sec: Section, traj):
        start = sec.num("start", None)
        if "after" in sec:
            start = self._event_time(traj, sec.text("after"), sec.path("after")) + \
                sec.num("delay", 0.0, nonneg=True)
        stop = sec.num("stop", None)
        if "until" in sec:
            stop = self._event_time(traj, sec.text("until"), sec.path("until"),
                                    after=start if start is not None else -np.inf)
        return start, stop

    def op_amplitude(self, sec: Section, label):
        sec.allow("op", "label", "trajectory", "start", "stop", "after", "delay", "until",
                  "expect")
        traj = self.canonical(sec.text("trajectory"), sec.path("trajectory"))
        start, stop = self._window(sec, traj)
        amp = oscillation_amplitude(traj, self.sc.n_nodes, start, stop)
        return self._expect(StepResult(label, "amplitude", float(amp.max()), details={
            "per_node": amp, "window": [start, stop]}), sec)

    def op_recovery(self, sec: Section, label):
        sec.allow("op", "label", "trajectory", "start", "stop", "after", "delay", "until",
                  "radius", "expect")
        traj = self.canonical(sec.text("trajectory"), sec.path("trajectory"))
        start, stop = self._window(sec, traj)
        radius = sec.num("radius", getattr(self.sc.nominal, "radius", None), positive=True)
        if radius is None:
            raise ConfigError("radius is required for non-Hopf nodes", sec.path("radius"))
        seg = traj.window(start, stop)
        rad = np.linalg.norm(seg.x.reshape(seg.t.size, self.sc.n_nodes, -1)[..., :2], axis=-1)
        err = np.abs(rad - radius).max(axis=0) / radius
        return self._expect(StepResult(label, "recovery", float(err.max()), details={
            "per_node": err, "window": [start, stop], "radius": radius}), sec)

    def op_phase_offsets(self, sec: Section, label):
        sec.allow("op", "label", "trajectory", "start", "stop", "after", "delay", "until",
                  "expect")
        traj = self.canonical(sec.text("trajectory"), sec.path("trajectory"))
        if self.sc.node_dim != 2:
            raise ConfigError("phase offsets need planar nodes", sec.where)
        start, stop = self._window(sec, traj)
        seg = traj.window(start, stop)
        xn = seg.x.reshape(seg.t.size, self.sc.n_nodes, 2)
        theta = np.unwrap(np.arctan2(xn[..., 1], xn[..., 0]), axis=0)
        worst, pairs = 0.0, {}
        for (i, j) in sorted(self.sc.graph.gains):
            phi = self.sc.graph.offsets.get((i, j), 0.0)
            d = theta[:, i] - theta[:, j] - phi
            err = float(np.max(np.abs((d + np.pi) % (2 * np.pi) - np.pi)))
            pairs[f"{i}-{j}"] = err
            worst = max(worst, err)
        return self._expect(StepResult(label, "phase_offsets", worst, details={
            "pairs": pairs, "window": [start, stop]}), sec)

    def _node_field(self, sec: Section):
        node = sec.integer("node", None, minimum=0)
        if node is None:
            return self.sc.nominal.field(), self.sc.nominal
        if node >= self.sc.n_nodes:
            raise ConfigError(f"no node {node}", sec.path("node"))
        osc = self.sc.hetero.per_node[node]
        return osc.field(), osc

    def op_certify(self, sec: Section, label):
        sec.allow("op", "label", "check", "field", "node", "region", "metric", "rate",
                  "tolerance", "expect_pass", "gain")
        sc = self.sc
        check = sec.text("check", choices=("contraction", "transverse", "sync",
                                           "sparse_inhibition"))
        seed = sc.seed
        if check == "sparse_inhibition":
            if not sc.inhibition:
                raise ConfigError("no inhibition rule declared", sec.path("check"))
            region = sec.child("region", None)
            sampler = build_region(region, sc.node_dim, self.samples, seed) if region else None
            cert = check_sparse_inhibition(sc.graph, sc.inhibition[0], sc.nominal, sampler)
        elif check == "sync":
            graph = sc.graph
            if "gain" in sec:
                gain = sec.num("gain", positive=True) * np.eye(sc.node_dim)
                with _building(sec.path("gain")):
                    graph = CouplingGraph(graph.n_nodes, {e: gain for e in graph.gains},
                                          graph.offsets, graph.directed)
            if not graph.gains:
                raise ConfigError("the graph has no edges", "graph")
            lap = assemble_block_laplacian(graph, sc.node_dim)
            sampler = build_region(sec.child("region"), sc.node_dim, self.samples, seed)
            fields = [o.field() for o in sc.hetero.per_node]
            cert = check_sync_condition(lap, fields, sampler)
        else:
            which = sec.text("field", "node", choices=("node", "network"))
            if which == "network":
                vf = sc.network_field(inhibition=False)
            else:
                vf, _ = self._node_field(sec)
            sampler = build_region(sec.child("region"), vf.dim, self.samples, seed)
            metric = build_metric(sec.raw("metric", None), vf.dim, sec.path("metric"))
            rate = sec.num("rate", nonneg=True)
            tol = sec.num("tolerance", 1e-9, nonneg=True)
            fn = check_contraction if check == "contraction" else check_transverse_contraction
            cert = fn(vf, metric, sampler, rate, tol)
        res = StepResult(label, "certify", cert.worst_margin, cert.passed,
                         details={"kind": cert.kind, "rate": cert.rate}, certificate=cert)
        if "expect_pass" in sec:
            res.details["expected_pass"] = sec.flag("expect_pass")
            res.details["as_expected"] = cert.passed == sec.flag("expect_pass")
        if sc.outputs["json"]:
            write_json(self._out(f"{label}.json"), cert.to_dict())
        return res

    def op_threshold(self, sec: Section, label):
        sec.allow("op", "label", "region", "rule", "margin")
        sc = self.sc
        if not sc.inhibition:
            raise ConfigError("no inhibition rule declared", sec.where)
        idx = sec.integer("rule", 0, minimum=0)
        if idx >= len(sc.inhibition):
            raise ConfigError(f"only {len(sc.inhibition)} rules", sec.path("rule"))
        rule = sc.inhibition[idx]
        n = sc.node_dim
        goal = rule.goal[0]
        g = VectorField(n, lambda x, t=0.0: goal - x,
                        lambda x, t=0.0: np.broadcast_to(-np.eye(n), np.shape(x)[:-1] + (n, n)),
                        name="pull")
        rsec = sec.child("region", None) or Section(
            {"kind": "ball", "center": goal.tolist(), "radius": rule.radius}, sec.path("region"))
        sampler = build_region(rsec, n, self.samples, sc.seed)
        est = inhibition_threshold_estimate(sc.nominal.field(), g, sampler)
        margin = sec.num("margin", 2.0, positive=True)
        ok = rule.gain >= margin * est.alpha0
        details = {"alpha0": est.alpha0, "beta": est.beta, "pull_rate": est.rate,
                   "gain": rule.gain, "required": margin * est.alpha0,
                   "witness": list(est.witness), "n_samples": est.n_samples,
                   "region": sampler.describe(), "note": est.note}
        if sc.outputs["json"]:
            write_json(self._out(f"{label}.json"), _jsonable(details))
        return StepResult(label, "threshold", est.alpha0, bool(ok), details=details,
                          expect={"max": rule.gain / margin})

    def op_spectrum(self, sec: Section, label):
        sec.allow("op", "label")
        if not self.sc.graph.gains:
            raise ConfigError("the graph has no edges", "graph")
        lap = assemble_block_laplacian(self.sc.graph, self.sc.node_dim)
        if self.sc.outputs["csv"]:
            with atomic_path(self._out(f"{label}.csv")) as tmp:
                lap.write_spectrum_csv(tmp)
        return StepResult(label, "spectrum", lap.lambda_n1, details={
            "eigenvalues": lap.eigenvalues, "lambda_N_plus_1": lap.lambda_n1,
            "projected_min": lap.projected_min, "connected": lap.connected})

    def op_learn(self, sec: Section, label):
        sec.allow("op", "label", "demonstration", "basis", "ridge")
        sc = self.sc
        dsec = sec.child("demonstration")
        truth = None
        if "synthetic" in dsec:
            dsec.allow("synthetic")
            syn = dsec.child("synthetic")
            syn.allow("transformation", "duration", "step", "x0", "y0", "yd0", "reference")
            idx = syn.integer("transformation", 0, minimum=0)
            if idx >= len(sc.transformations):
                raise ConfigError(f"only {len(sc.transformations)} transformation systems",
                                  syn.path("transformation"))
            tr = sc.transformations[idx][0]
            if tr.forcing is None:
                raise ConfigError("the transformation system has no forcing to recover",
                                  syn.path("transformation"))
            with _building(syn.where):
                demo, phase = demonstration_from_system(
                    tr, sc.nominal, syn.array("x0"), syn.array("y0"),
                    syn.num("duration", positive=True), syn.num("step", 1e-3, positive=True),
                    syn.array("yd0", None), syn.array("reference", None))
            truth = tr.forcing
            if sc.outputs["csv"]:
                with atomic_path(self._out(f"{label}_demo.csv")) as tmp:
                    demo.to_csv(tmp)
        else:
            dsec.allow("csv", "k", "b", "goal", "tau", "time_scaled", "x0")
            csv_path = Path(dsec.text("csv"))
            if not csv_path.is_absolute() and sc.source is not None:
                csv_path = sc.source.parent / csv_path
            with _building(dsec.path("csv")):
                demo = Demonstration.from_csv(
                    csv_path, k=dsec.num("k", positive=True), b=dsec.num("b", positive=True),
                    goal=dsec.array("goal"), tau=dsec.num("tau", 1.0, positive=True),
                    time_scaled=dsec.flag("time_scaled", False))
            phase = self._phase_rollout(demo.t, dsec)
        bsec = sec.child("basis", None)
        if bsec is not None:
            basis = self._basis(bsec, demo.n_out)
        elif truth is not None:
            basis = truth
        else:
            raise ConfigError("a basis is required for recorded demonstrations", sec.path("basis"))
        with _building(sec.where):
            fit = fit_weights(compute_target_forcing(demo), phase, basis,
                              sec.num("ridge", None, nonneg=True))
        details = {"rmse": fit.rmse, "baseline_rmse": fit.baseline_rmse, "ridge": fit.ridge,
                   "rank": fit.rank, "n_samples": int(demo.t.size)}
        if truth is not None and np.size(truth.weights) == np.size(fit.weights):
            est = np.reshape(fit.weights, np.shape(truth.weights))
            details["weight_error"] = float(np.max(np.abs(est - truth.weights)))
        if sc.outputs["json"]:
            write_json(self._out(f"{label}_weights.json"),
                       {"forcing": weights_to_config(fit.forcing), "fit": _jsonable(details)})
        return StepResult(label, "learn", fit.rmse, details=details)

    def _basis(self, bsec: Section, n_out):
        bsec.allow("kind", "n_basis", "centers", "width")
        kind = bsec.text("kind", choices=("gaussian", "von-mises"))
        if "centers" in bsec:
            centers = bsec.array("centers")
        else:
            p = bsec.integer("n_basis", minimum=1)
            if kind == "gaussian":
                alpha = getattr(self.sc.nominal, "alpha_x", 1.0)
                centers = np.exp(-alpha * np.linspace(0.0, 1.0, p))
            else:
                centers = np.linspace(-np.pi, np.pi, p, endpoint=False)
        width = bsec.num("width", positive=True)
        with _building(bsec.where):
            if kind == "gaussian":
                return GaussianForcing(centers, width, np.zeros((centers.size, n_out)))
            return VonMisesForcing(centers, width, np.zeros((centers.size, n_out, 2)))

    def _phase_rollout(self, t, dsec: Section):
        dt = np.diff(t)
        if not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-12):
            raise ConfigError("recorded demonstrations need a uniform time grid",
                              dsec.path("csv"))
        osc = self.sc.nominal
        default = [1.0] if osc.dim == 1 else [getattr(osc, "radius", 1.0), 0.0]
        x0 = dsec.array("x0", np.asarray(default), shape=(osc.dim,))
        traj = integrate(osc.field(), x0, IntegratorConfig(float(dt[0]), float(t[-1] - t[0]),
                                                           t0=float(t[0])))
        x = traj.x[:t.size]
        if x.shape[0] != t.size:
            raise ConfigError("could not roll out the phase on the demonstration grid",
                              dsec.path("csv"))
        return x[:, 0] if osc.dim == 1 else x

    # -- driver --------------------------------------------------------------

    def run(self):
        steps = [(i, s) for i, s in enumerate(self.sc.pipeline) if s.raw("op") in self.ops]
        if self.gait:
            if not self.sc.transformations:
                raise ConfigError("the gait command needs transformation systems",
                                  "systems.transformations")
            if not any(s.raw("op") == "simulate" for _, s in steps):
                raise ConfigError("the gait command needs a simulate step", "pipeline")
        if not steps:
            log.warning("scenario %s: pipeline has no steps for this command; nothing to do",
                        self.sc.name)
            return self.results
        for i, sec in steps:
            op = sec.raw("op")
            label = sec.text("label", f"step{i}")
            log.info("step %s (%s)", label, op)
            res = getattr(self, f"op_{op}")(sec, label)
            self.results.append(res)
        if self.sc.outputs["summary"]:
            write_json(self._out("summary.json"), {
                "scenario": self.sc.name, "seed": self.sc.seed,
                "steps": [r.to_dict() for r in self.results],
                "files": sorted(p.name for p in set(self.files))})
        return self.results


def run_scenario(path_or_name, out_dir, seed=None, samples=None, ops=ALL_OPS, gait=False):
    """Load, run and write one scenario; returns ``(scenario, results, files)``."""
    sc = load_scenario(path_or_name, seed)
    runner = Runner(sc, out_dir, samples=samples, ops=ops, gait=gait)
    results = runner.run()
    return sc, results, sorted(set(runner.files))

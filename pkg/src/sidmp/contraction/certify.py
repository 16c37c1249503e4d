"""Sample-based contraction, transverse-contraction and synchronization checks."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from dataclasses import field as dc_field
from typing import Optional, Sequence

import numpy as np

from ..errors import PreconditionError, UnsupportedCompositionError
from .measures import matrix_measure
from .metrics import Metric, RegionSampler

SAMPLE_NOTE = (
    "sample-based numerical evidence: the inequality was checked only at the "
    "listed sample points; this is not a proof over the region"
)


@dataclass(frozen=True)
class Certificate:
    """Outcome of a sampled check.

    ``worst_margin`` is the largest value of the checked quantity over the
    samples; ``passed`` is ``worst_margin <= tolerance`` (strict ``<`` for
    synchronization, whose condition is a strict inequality).
    """

    kind: str
    rate: float
    worst_margin: float
    witness: tuple
    n_samples: int
    passed: bool
    tolerance: float = 0.0
    metric: str = ""
    field: str = ""
    region: str = ""
    details: dict = dc_field(default_factory=dict)
    note: str = SAMPLE_NOTE

    def to_dict(self):
        d = asdict(self)
        d["witness"] = [float(v) for v in self.witness]
        return _jsonable(d)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.kind:<15} rate={self.rate:.6g} "
                f"worst={self.worst_margin:.6g} n={self.n_samples} [{self.region}]")


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
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def generalized_eigvals(s, m):
    """Eigenvalues of ``s`` relative to SPD ``m`` (batched), ascending."""
    chol = np.linalg.cholesky(m)
    li = np.linalg.inv(chol)
    st = li @ s @ np.swapaxes(li, -1, -2)
    return np.linalg.eigvalsh(0.5 * (st + np.swapaxes(st, -1, -2)))


def _differential_form(vf, metric: Metric, xs, t=0.0):
    """``Mdot + A^T M + M A`` and ``M`` at each sample, plus the field values."""
    fx = vf(xs, t)
    a = vf.jacobian(xs, t)
    m = np.asarray(metric.batch(xs), dtype=float)
    if metric.constant:
        mdot = 0.0
    else:
        mdot = np.stack([metric.rate(x, f) for x, f in zip(xs, fx)])
    s = mdot + np.swapaxes(a, -1, -2) @ m + m @ a
    return s, m, fx


def _min_metric_eig(m):
    return float(np.min(np.linalg.eigvalsh(m)[..., 0]))


def contraction_margins(vf, metric: Metric, xs, t=0.0):
    """Largest eigenvalue of ``Mdot + A^T M + M A`` relative to ``M`` per sample."""
    s, m, _ = _differential_form(vf, metric, xs, t)
    return generalized_eigvals(s, m)[..., -1], m


def check_contraction(vf, metric: Metric, sampler: RegionSampler, rate: float,
                      tol: float = 1e-9, t: float = 0.0) -> Certificate:
    """Check ``Mdot + A^T M + M A + 2 rate M <= 0`` at every sample.

    The margin at a sample is the largest eigenvalue of the left side
    relative to ``M``.
    """
    xs = sampler.samples()
    base, m = contraction_margins(vf, metric, xs, t)
    margins = base + 2.0 * rate
    i = int(np.argmax(margins))
    return Certificate(
        kind="contraction", rate=float(rate), worst_margin=float(margins[i]),
        witness=tuple(xs[i]), n_samples=len(xs), passed=bool(margins[i] <= tol),
        tolerance=tol, metric=metric.name, field=vf.name, region=sampler.describe(),
        details={"max_certified_rate": float(-np.max(base) / 2.0),
                 "min_metric_eigenvalue": _min_metric_eig(m)},
    )


def transverse_basis(v):
    """Orthonormal basis of the complement of each row of ``v`` (batched).

    Returns an array of shape ``(m, n, n - 1)``; built from a Householder
    reflector that maps ``v`` onto the first coordinate axis.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    vh = v / np.linalg.norm(v, axis=-1, keepdims=True)
    sign = np.where(vh[:, 0] >= 0, 1.0, -1.0)
    u = vh.copy()
    u[:, 0] += sign
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    n = v.shape[-1]
    h = np.eye(n) - 2.0 * u[:, :, None] * u[:, None, :]
    return h[:, :, 1:]


def transverse_margins(vf, metric: Metric, xs, t=0.0, eq_tol=1e-9):
    """Largest restricted eigenvalue of ``Mdot + A^T M + M A`` on ``{d: f^T M d = 0}``."""
    s, m, fx = _differential_form(vf, metric, xs, t)
    speed = np.linalg.norm(fx, axis=-1)
    bad = speed <= eq_tol * (1.0 + np.linalg.norm(xs, axis=-1))
    if np.any(bad):
        raise PreconditionError(
            f"field vanishes at {int(bad.sum())} sample(s); transverse contraction "
            "needs f(x) != 0 on the region", points=xs[bad])
    v = np.einsum("kij,kj->ki", m, fx)
    p = transverse_basis(v)
    pt = np.swapaxes(p, -1, -2)
    sr = pt @ s @ p
    mr = pt @ m @ p
    return generalized_eigvals(sr, mr)[..., -1], m, speed


def check_transverse_contraction(vf, metric: Metric, sampler: RegionSampler, rate: float,
                                 tol: float = 1e-9, t: float = 0.0,
                                 eq_tol: float = 1e-9) -> Certificate:
    """Check the contraction inequality restricted to displacements with ``f^T M d = 0``.

    Raises :class:`PreconditionError` if the field vanishes at a sample.
    """
    xs = sampler.samples()
    base, m, speed = transverse_margins(vf, metric, xs, t, eq_tol)
    margins = base + 2.0 * rate
    i = int(np.argmax(margins))
    return Certificate(
        kind="transverse", rate=float(rate), worst_margin=float(margins[i]),
        witness=tuple(xs[i]), n_samples=len(xs), passed=bool(margins[i] <= tol),
        tolerance=tol, metric=metric.name, field=vf.name, region=sampler.describe(),
        details={"max_certified_rate": float(-np.max(base) / 2.0),
                 "min_metric_eigenvalue": _min_metric_eig(m),
                 "min_flow_speed": float(np.min(speed))},
    )


def certified_rate(vf, metric: Metric, sampler: RegionSampler, transverse=False, t=0.0):
    """Largest rate for which the sampled check passes (may be negative)."""
    xs = sampler.samples()
    if transverse:
        base = transverse_margins(vf, metric, xs, t)[0]
    else:
        base = contraction_margins(vf, metric, xs, t)[0]
    return float(-np.max(base) / 2.0)


def check_sync_condition(laplacian, node_fields, sampler: RegionSampler,
                         norms=(1, 2, np.inf)) -> Certificate:
    """Compare the coupling spectrum with the worst symmetric node Jacobian.

    Passes when ``lambda_{N+1}(L_K)`` (eigenvalues sorted non-increasing)
    strictly exceeds the sampled supremum of ``lambda_max(A_s)`` over all
    nodes. The smallest eigenvalue of ``V L_K V^T`` and the matrix-measure
    forms ``max_i mu(A_i) + mu(-V L_K V^T)`` are reported alongside.
    """
    if not laplacian.connected:
        raise PreconditionError("coupling graph is not connected")
    n_nodes = laplacian.n_nodes
    fields = list(node_fields) if isinstance(node_fields, (list, tuple)) else [node_fields]
    if len(fields) not in (1, n_nodes):
        raise PreconditionError("give one node field or one per node")
    xs = sampler.samples()
    sup, witness = -np.inf, None
    mu_max = {str(nm): -np.inf for nm in norms}
    for vf in fields:
        a = vf.jacobian(xs)
        lam = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, -1, -2)))[..., -1]
        i = int(np.argmax(lam))
        if lam[i] > sup:
            sup, witness = float(lam[i]), xs[i]
        for nm in norms:
            mu_max[str(nm)] = max(mu_max[str(nm)], float(np.max(matrix_measure(a, nm))))
    lam_n1 = laplacian.eigenvalue(n_nodes + 1)
    lam_v = laplacian.projected_min
    proj = laplacian.V @ laplacian.LK @ laplacian.V.T
    mu_forms = {k: v + float(matrix_measure(-proj, k)) for k, v in mu_max.items()}
    margin = sup - lam_n1
    return Certificate(
        kind="synchronization", rate=float(lam_n1 - sup), worst_margin=float(margin),
        witness=tuple(witness), n_samples=len(xs), passed=bool(margin < 0.0),
        tolerance=0.0, metric="identity", field=fields[0].name, region=sampler.describe(),
        details={
            "lambda_N_plus_1": float(lam_n1),
            "lambda_min_projected": float(lam_v),
            "sup_lambda_max_As": sup,
            "passed_projected": bool(sup < lam_v),
            "mu_forms": mu_forms,
            "passed_mu": {k: bool(v < 0) for k, v in mu_forms.items()},
            "critical_gain_scale": float(sup / lam_n1) if lam_n1 > 0 else float("inf"),
            "critical_gain_scale_projected": float(sup / lam_v) if lam_v > 0 else float("inf"),
        },
    )


def check_hierarchy(certs: Sequence[Certificate], mode: str = "cascade",
                    regions: Optional[Sequence[RegionSampler]] = None) -> Certificate:
    """Combine per-layer certificates.

    ``mode="cascade"``: layers listed in driving order. All contracting gives
    a contracting cascade; exactly one transverse layer gives a transverse
    cascade; more than one transverse layer has no composition rule.

    ``mode="intersection"``: ``certs = (transverse on K, contraction on C)``
    and ``regions = (K, C)``. If both pass and the sampled regions overlap,
    the prediction is a unique equilibrium in ``K & C`` attracting ``K | C``;
    simulation should confirm it.
    """
    certs = list(certs)
    if not certs:
        raise UnsupportedCompositionError("no layer certificates given")
    if mode == "cascade":
        kinds = [c.kind for c in certs]
        bad = [k for k in kinds if k not in ("contraction", "transverse")]
        if bad:
            raise UnsupportedCompositionError(f"layer kinds {bad} cannot be cascaded")
        n_trans = kinds.count("transverse")
        if n_trans > 1:
            raise UnsupportedCompositionError(
                "more than one transverse layer: no composition rule is available")
        kind = "transverse" if n_trans else "contraction"
        worst = max(certs, key=lambda c: c.worst_margin)
        return Certificate(
            kind=kind, rate=min(c.rate for c in certs), worst_margin=worst.worst_margin,
            witness=worst.witness, n_samples=sum(c.n_samples for c in certs),
            passed=all(c.passed for c in certs), tolerance=max(c.tolerance for c in certs),
            metric="block-diagonal(" + ",".join(c.metric for c in certs) + ")",
            field="cascade(" + ",".join(c.field for c in certs) + ")",
            region=" x ".join(c.region for c in certs),
            details={"layers": [{"kind": c.kind, "rate": c.rate, "passed": c.passed}
                                for c in certs],
                     "rule": "contracting cascade" if kind == "contraction"
                     else "cascade with one transverse layer"},
        )
    if mode == "intersection":
        if len(certs) != 2 or certs[0].kind != "transverse" or certs[1].kind != "contraction":
            raise UnsupportedCompositionError(
                "intersection mode needs (transverse certificate, contraction certificate)")
        if regions is None or len(regions) != 2:
            raise UnsupportedCompositionError("intersection mode needs the two region samplers")
        k_reg, c_reg = regions
        c_pts, k_pts = c_reg.samples(), k_reg.samples()
        inter = np.vstack([c_pts[k_reg.contains(c_pts)], k_pts[c_reg.contains(k_pts)]])
        nonempty = inter.shape[0] > 0
        t_cert, c_cert = certs
        return Certificate(
            kind="equilibrium", rate=c_cert.rate,
            worst_margin=max(t_cert.worst_margin, c_cert.worst_margin),
            witness=tuple(inter[0]) if nonempty else tuple(),
            n_samples=t_cert.n_samples + c_cert.n_samples,
            passed=bool(t_cert.passed and c_cert.passed and nonempty),
            tolerance=max(t_cert.tolerance, c_cert.tolerance),
            metric=f"{t_cert.metric}|{c_cert.metric}", field=t_cert.field,
            region=f"{k_reg.describe()} | {c_reg.describe()}",
            details={"intersection_samples": int(inter.shape[0]),
                     "prediction": "unique equilibrium in K&C attracting every start in K|C; "
                                   "confirm by simulation"},
        )
    raise UnsupportedCompositionError(f"unknown mode {mode!r}")

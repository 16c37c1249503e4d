import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import complete_graph_lambda, sync_threshold
from sidmp.contraction import RegionSampler, check_sync_condition
from sidmp.dynamics import Hopf, VanDerPol, VectorField, rotation_matrix
from sidmp.errors import NotContractingError, ParameterError
from sidmp.network import (
    CouplingGraph,
    HeterogeneousParams,
    InhibitionRule,
    assemble_block_laplacian,
    check_sparse_inhibition,
    coupled_canonical_field,
    heterogeneity_disturbance,
    inhibition_threshold_estimate,
    laplacian_matrix,
    weighted_inhibition_field,
)
from sidmp.simulate import IntegratorConfig, integrate, sync_error

AMBLE = np.array([0.0, np.pi / 2, np.pi, 3 * np.pi / 2])
angles = st.floats(-np.pi, np.pi)


def _rotations(psi):
    n = len(psi)
    out = np.zeros((2 * n, 2 * n))
    for i, p in enumerate(psi):
        out[2 * i:2 * i + 2, 2 * i:2 * i + 2] = rotation_matrix(p)
    return out


# graphs and Laplacians -------------------------------------------------------


@given(psi=st.lists(angles, min_size=4, max_size=4), x0=st.tuples(angles, angles))
@settings(max_examples=30)
def test_offset_laplacian_kernel(psi, x0):
    g = CouplingGraph.all_to_all(4, 1.7, phases=psi)
    big = laplacian_matrix(g, 2)
    x = np.concatenate([rotation_matrix(p) @ np.array(x0) for p in psi])
    np.testing.assert_allclose(big @ x, 0.0, atol=1e-12)


def test_zero_offset_kernel_is_sync_subspace():
    lap = assemble_block_laplacian(CouplingGraph.all_to_all(4, np.eye(2)))
    assert lap.kernel_dim == 2 and lap.connected
    sync = np.tile([0.3, -0.8], 4)
    np.testing.assert_allclose(lap.L @ sync, 0.0, atol=1e-14)
    np.testing.assert_allclose(lap.V @ sync, 0.0, atol=1e-14)
    np.testing.assert_allclose(lap.V @ lap.V.T, np.eye(6), atol=1e-14)


@pytest.mark.parametrize("n,k", [(3, 0.5), (4, 2.0), (6, 1.0)])
def test_complete_graph_spectrum(n, k):
    lap = assemble_block_laplacian(CouplingGraph.all_to_all(n, k * np.eye(2)))
    assert lap.lambda_n1 == pytest.approx(complete_graph_lambda(n, k))
    assert lap.projected_min == pytest.approx(complete_graph_lambda(n, k))


@given(psi=st.lists(angles, min_size=3, max_size=3),
       xs=st.lists(st.floats(-2, 2), min_size=6, max_size=6))
@settings(max_examples=30)
def test_offsets_conjugate_to_zero_offset_network(psi, xs):
    h = Hopf()
    shifted = coupled_canonical_field(CouplingGraph.all_to_all(3, 2.0, phases=psi), h)
    plain = coupled_canonical_field(CouplingGraph.all_to_all(3, 2.0), h)
    rot = _rotations(psi)
    z = np.array(xs)
    np.testing.assert_allclose(shifted(rot @ z), rot @ plain(z), atol=1e-11)


def test_graph_validation():
    with pytest.raises(ParameterError):
        CouplingGraph(2, {(0, 1): 1.0})  # missing reverse edge
    with pytest.raises(ParameterError):
        CouplingGraph(2, {(0, 1): 1.0, (1, 0): 2.0})
    with pytest.raises(ParameterError):
        CouplingGraph(2, {(0, 1): -1.0, (1, 0): -1.0})
    with pytest.raises(ParameterError):
        CouplingGraph(2, {(0, 0): 1.0})
    with pytest.raises(ParameterError):
        CouplingGraph(2, {(0, 1): 1.0, (1, 0): 1.0}, offsets={(0, 1): 0.5, (1, 0): 0.5})
    with pytest.raises(ParameterError):
        CouplingGraph(3, {(0, 1): 1.0, (1, 2): 2.0}, directed=True)


def test_node_phases_and_cycle_consistency():
    g = CouplingGraph.all_to_all(4, 1.0, phases=AMBLE)
    np.testing.assert_allclose(np.cos(g.node_phases() - AMBLE), 1.0)
    bad = CouplingGraph.from_edges(3, [(0, 1), (1, 2), (2, 0)], 1.0,
                                   offsets={(0, 1): 0.1, (1, 2): 0.1, (2, 0): 0.1})
    with pytest.raises(ParameterError):
        bad.node_phases()


def test_offsets_need_rotation_invariant_nodes():
    g = CouplingGraph.all_to_all(2, 1.0, phases=[0.0, 1.0])
    with pytest.raises(ParameterError):
        coupled_canonical_field(g, VanDerPol(1.0, 1.0, classical=True))


def test_reachability_in_directed_graphs():
    g = CouplingGraph.from_edges(3, [(1, 0), (2, 1)], 1.0, directed=True)
    assert g.reachable_from(0) == {0, 1, 2}
    assert g.reachable_from(2) == {2}


# coupled fields --------------------------------------------------------------


def test_heterogeneous_field_matches_per_node_evaluation():
    nodes = tuple(VanDerPol(w, m, classical=True) for w, m in [(5.0, 1.6), (6.3, 2.0), (7.0, 2.4)])
    hetero = HeterogeneousParams(nodes[1], nodes)
    g = CouplingGraph.all_to_all(3, 4 * np.eye(2))
    vf = coupled_canonical_field(g, None, hetero=hetero)
    x = np.random.default_rng(1).normal(size=(20, 6))
    lap = laplacian_matrix(g, 2)
    expect = np.concatenate([o.rhs(x[:, 2 * i:2 * i + 2]) for i, o in enumerate(nodes)], axis=1)
    np.testing.assert_allclose(vf(x), expect - x @ lap.T, atol=1e-12)
    d, sup = heterogeneity_disturbance(hetero, x)
    assert np.all(d[:, 1] == 0) and sup > 0
    _, zero = heterogeneity_disturbance(HeterogeneousParams.homogeneous(nodes[1], 3), x)
    assert zero == 0.0


def test_hopf_network_synchronizes_above_threshold():
    k_star = sync_threshold(4)
    g = CouplingGraph.all_to_all(4, 2 * k_star * np.eye(2))
    cert = check_sync_condition(assemble_block_laplacian(g), Hopf().field(),
                                RegionSampler.ball([0, 0], 1.0, n_samples=256))
    assert cert.passed
    assert cert.details["sup_lambda_max_As"] == pytest.approx(1.0)
    x0 = np.random.default_rng(0).uniform(-1, 1, 8)
    traj = integrate(coupled_canonical_field(g, Hopf()), x0, IntegratorConfig(1e-2, 30.0))
    assert sync_error(traj, 4, window=1.0) < 1e-6


def test_sync_condition_fails_below_threshold():
    g = CouplingGraph.all_to_all(4, 0.5 * sync_threshold(4) * np.eye(2))
    cert = check_sync_condition(assemble_block_laplacian(g), Hopf().field(),
                                RegionSampler.ball([0, 0], 1.0, n_samples=256))
    assert not cert.passed


# inhibition ------------------------------------------------------------------


def test_threshold_matches_closed_form():
    h = Hopf()
    goal = np.array([1.0, 0.0])
    pull = VectorField(2, lambda x, t=0.0: goal - x,
                       lambda x, t=0.0: np.broadcast_to(-np.eye(2), np.shape(x)[:-1] + (2, 2)))
    disk = RegionSampler.ball(goal, 0.3, n_samples=512, boundary=64)
    est = inhibition_threshold_estimate(h.field(), pull, disk)
    # on the disk the nearest point to the origin has radius 0.7
    assert est.alpha0 == pytest.approx(h.rho * (h.radius**2 - 0.7**2), abs=1e-3)
    assert est.rate == pytest.approx(1.0)
    with pytest.raises(NotContractingError):
        inhibition_threshold_estimate(h.field(), h.field(), disk)


def test_sparse_inhibition_certificate():
    g = CouplingGraph.all_to_all(4, 8.0, phases=AMBLE)
    rule = InhibitionRule(nodes=(0,), goal=[1.0, 0.0], gain=50.0)
    cert = check_sparse_inhibition(g, rule)
    assert cert.passed and cert.details["all_reachable"]
    lonely = CouplingGraph.from_edges(3, [(1, 2)], 1.0)
    assert not check_sparse_inhibition(lonely, rule).passed
    chain = CouplingGraph.from_edges(3, [(1, 0), (2, 1)], 1.0, directed=True)
    assert check_sparse_inhibition(chain, rule).passed
    assert not check_sparse_inhibition(
        chain, InhibitionRule(nodes=(2,), goal=[1.0, 0.0])).passed


def test_weighted_inhibition_field_is_monotone_in_weights():
    g = CouplingGraph.all_to_all(3, 1.0)
    rule = InhibitionRule(nodes=(0,), goal=[1.0, 0.0])
    rates = []
    for a in (0.1, 0.5, 2.0):
        inh, _ = weighted_inhibition_field(g, rule, alphas=[a, 0.0, 0.0])
        jac = inh.jacobian(np.zeros(6))
        rates.append(-np.linalg.eigvalsh(0.5 * (jac + jac.T))[-1])
    assert rates[0] < rates[1] < rates[2]
    with pytest.raises(ParameterError):
        weighted_inhibition_field(g, rule, alphas=[-1.0, 0.0, 0.0])


def _amble_run(mode):
    g = CouplingGraph.all_to_all(4, 8.0, phases=AMBLE)
    rule = InhibitionRule(nodes=(0,), goal=[1.0, 0.0], radius=0.3, gain=50.0,
                          schedule=((2.0, 6.0),), mode=mode)
    vf = coupled_canonical_field(g, Hopf(), inhibition=rule)
    assert vf.switching is not None
    x0 = np.concatenate([rotation_matrix(p) @ [1.0, 0.0] for p in AMBLE])
    return integrate(vf, x0, IntegratorConfig(1e-3, 8.0))


@pytest.mark.parametrize("mode", ["latch", "always"])
def test_inhibition_stops_the_network(mode):
    traj = _amble_run(mode)
    on = traj.event_times("inhibit0:on")[0]
    off = traj.event_times("inhibit0:off")[-1]
    assert 2.0 <= on < 3.1 and off == pytest.approx(6.0, abs=2e-3)
    late = traj.window(on + 1.5, off).x
    assert np.max(late.max(axis=0) - late.min(axis=0)) < 1e-3
    # after release the cycle returns
    tail = traj.window(off + 1.5, None).x.reshape(-1, 4, 2)
    assert np.max(np.abs(np.linalg.norm(tail, axis=-1) - 1.0)) < 0.05


def test_strict_inhibition_releases_when_dragged_out():
    # the coupled neighbours pull node 0 out of the disk, which switches the pull off
    traj = _amble_run("strict")
    assert len(traj.event_times("inhibit0:on")) >= 2
    assert all(2.0 <= t <= 6.0 for t in traj.event_times("inhibit0:off"))
    seg = traj.window(4.0, 5.3).x
    assert np.max(seg.max(axis=0) - seg.min(axis=0)) > 0.5


def test_inhibition_rule_validation():
    with pytest.raises(ParameterError):
        InhibitionRule(nodes=(0,), goal=[1.0, 0.0], mode="sometimes")
    with pytest.raises(ParameterError):
        InhibitionRule(nodes=(0, 1), goal=[1.0, 0.0], weights=(1.0,))
    with pytest.raises(ParameterError):
        InhibitionRule(nodes=(0,), goal=[1.0, 0.0], radius=0.0)

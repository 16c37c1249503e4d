"""The ten acceptance criteria, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line through the ``acceptance`` fixture;
the lines are repeated in the terminal summary.
"""
import itertools
import time

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from oracles import (
    hopf_closed_form,
    linear_flow,
    projected_brute_force,
    projected_plane_max,
    sync_threshold,
)
from sidmp.contraction import (
    Metric,
    RegionSampler,
    build_full_metric,
    build_singular_metric,
    certified_rate,
    check_contraction,
    check_hierarchy,
    check_sync_condition,
    check_transverse_contraction,
    condition_bound,
    matrix_measure,
    pushforward_metric,
    transverse_margins,
    tube_bound_check,
)
from sidmp.dynamics import (
    AffineMap,
    ExponentialPhase,
    GaussianForcing,
    Hopf,
    ReferenceSystem,
    TransformationSystem,
    VectorField,
    VonMisesForcing,
    apply_diffeomorphism,
    rotation_matrix,
)
from sidmp.errors import UnsupportedCompositionError
from sidmp.learning import compute_target_forcing, demonstration_from_system, fit_weights
from sidmp.network import (
    CouplingGraph,
    InhibitionRule,
    assemble_block_laplacian,
    coupled_canonical_field,
    inhibition_threshold_estimate,
    weighted_inhibition_field,
)
from sidmp.scenario import Runner, load_scenario
from sidmp.simulate import (
    IntegratorConfig,
    RandomPiecewiseDisturbance,
    estimate_period,
    integrate,
    oscillation_amplitude,
    sync_error,
)


def test_01_heterogeneous_vdp_locking(tmp_path, acceptance):
    start = time.perf_counter()
    sc = load_scenario("vdp_hetero")
    omegas = np.array([o.omega for o in sc.hetero.per_node]) / sc.nominal.omega
    mus = np.array([o.mu for o in sc.hetero.per_node]) / sc.nominal.mu
    assert np.allclose(omegas, [0.9, 1.0, 1.1]) and np.allclose(mus, [0.8, 1.0, 1.2])
    assert np.array_equal(sc.graph.gains[(0, 1)], np.diag([4.0, 4.0]))
    results = {r.label: r for r in Runner(sc, tmp_path, ops=("simulate", "period")).run()}
    elapsed = time.perf_counter() - start
    coupled = results["coupled_periods"].value
    uncoupled = results["uncoupled_periods"].value
    ok = coupled < 0.01 and uncoupled >= 0.10 and elapsed < 10.0
    acceptance(1, "heterogeneous Van der Pol locking", ok,
               f"coupled spread={coupled:.2e} uncoupled spread={uncoupled:.3f} t={elapsed:.1f}s")
    assert ok


def test_02_synchronization_threshold(acceptance):
    start = time.perf_counter()
    hopf = Hopf()
    k_star_oracle = sync_threshold(4, hopf.rho, hopf.radius)
    ball = RegionSampler.ball([0.0, 0.0], 1.0, n_samples=4096, boundary=64)
    unit = check_sync_condition(assemble_block_laplacian(CouplingGraph.all_to_all(4, np.eye(2))),
                                hopf.field(), ball)
    k_star = unit.details["critical_gain_scale"]
    k = 2.0 * k_star
    graph = CouplingGraph.all_to_all(4, k * np.eye(2))
    cert = check_sync_condition(assemble_block_laplacian(graph), hopf.field(), ball)
    x0 = np.random.default_rng(2024).uniform(-1.0, 1.0, (50, 8))
    n_periods = 20
    traj = integrate(coupled_canonical_field(graph, hopf), x0,
                     IntegratorConfig(1e-3, n_periods * hopf.period(), record_every=10))
    err = sync_error(traj, 4, window=hopf.period())
    elapsed = time.perf_counter() - start
    ok = (abs(k_star - k_star_oracle) < 1e-9 and cert.passed and err < 1e-6 and elapsed < 30.0)
    acceptance(2, "synchronization condition", ok,
               f"k*={k_star:.6f} (oracle {k_star_oracle:.6f}) sync err={err:.1e} "
               f"over 50 starts t={elapsed:.1f}s")
    assert ok


def test_03_sparse_inhibition(acceptance):
    start = time.perf_counter()
    sc = load_scenario("si_rdmp_amble")
    rule = sc.inhibition[0]
    assert rule.nodes == (0,) and np.allclose(rule.goal[0], [1.0, 0.0]) and rule.radius == 0.3
    goal = rule.goal[0]
    pull = VectorField(2, lambda x, t=0.0: goal - x,
                       lambda x, t=0.0: np.broadcast_to(-np.eye(2), np.shape(x)[:-1] + (2, 2)))
    est = inhibition_threshold_estimate(sc.nominal.field(), pull,
                                        RegionSampler.ball(goal, rule.radius, n_samples=4096,
                                                           boundary=64))
    vf = sc.network_field()
    x0 = Runner(sc, "unused").initial_state(vf)
    t_cmd, t_off = rule.schedule[0]
    traj = integrate(vf, x0, IntegratorConfig(1e-3, t_off + 3.6))
    amp = oscillation_amplitude(traj, 4, t_cmd + 2.0, t_off)
    tail = traj.window(t_off + 3.0, None).x.reshape(-1, 4, 2)
    radius_err = float(np.max(np.abs(np.linalg.norm(tail, axis=-1) - sc.nominal.radius))
                       / sc.nominal.radius)
    elapsed = time.perf_counter() - start
    ok = (rule.gain >= 2.0 * est.alpha0 and np.max(amp) < 1e-3 and radius_err < 0.02
          and elapsed < 10.0)
    acceptance(3, "sparse inhibition", ok,
               f"alpha0={est.alpha0:.3f} k_inh={rule.gain:g} max amp={np.max(amp):.1e} "
               f"radius err={radius_err:.2%} t={elapsed:.1f}s")
    assert ok


def test_04_weighted_inhibition_monotonicity(acceptance):
    graph = CouplingGraph.all_to_all(4, 1.0)
    rule = InhibitionRule(nodes=(0, 1, 2, 3), goal=[1.0, 0.0], gain=1.0)
    grid = np.linspace(0.0, 2.0, 5)
    states = np.random.default_rng(7).uniform(-1.5, 1.5, (200, 8))
    lam = {}
    for alphas in itertools.product(range(5), repeat=4):
        inh, _ = weighted_inhibition_field(graph, rule, alphas=grid[list(alphas)])
        a = inh.jacobian(states)
        lam[alphas] = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, -1, -2)))[:, -1]
    worst = -np.inf
    for alphas, value in lam.items():
        for i in range(4):
            if alphas[i] < 4:
                up = alphas[:i] + (alphas[i] + 1,) + alphas[i + 1:]
                worst = max(worst, float(np.max(lam[up] - value)))
    ok = worst <= 1e-9
    acceptance(4, "weighted-inhibition monotonicity", ok,
               f"max increase={worst:.1e} over {len(lam)} grid points x 200 states")
    assert ok


def test_05_metric_construction_on_hopf(acceptance):
    start = time.perf_counter()
    th = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
    pts = np.stack([np.cos(th), np.sin(th)], axis=1)
    vf = Hopf().field()
    sm = build_singular_metric(vf, pts)
    fb = build_full_metric(sm)
    elapsed = time.perf_counter() - start
    fx = vf(pts)
    mf = np.einsum("kij,kj->ki", sm.ms, fx)
    kernel = np.linalg.norm(mf, axis=1) / (np.linalg.norm(sm.ms, 2, axis=(1, 2))
                                           * np.linalg.norm(fx, axis=1))
    ev = np.linalg.eigvalsh(sm.ms)
    small = np.sum(ev < 1e-6 * np.trace(sm.ms, axis1=1, axis2=2)[:, None], axis=1)
    lam1, lam2 = fb.fs_eigs[:, 0], fb.fs_eigs[:, 1]
    ok = (np.all(kernel < 1e-6) and np.all(small == 1)
          and np.all(np.abs(lam1) <= 1e-3 * np.abs(lam2)) and np.all(lam2 < 0)
          and elapsed < 60.0)
    acceptance(5, "metric construction on Hopf", ok,
               f"max |Ms f|/(|Ms||f|)={kernel.max():.1e} "
               f"max |l1|/|l2|={np.max(np.abs(lam1) / np.abs(lam2)):.1e} "
               f"max l2={lam2.max():.3f} t={elapsed:.1f}s")
    assert ok


def test_06_tube_bound(acceptance):
    start = time.perf_counter()
    vf = Hopf().field()
    metric = Metric.identity(2)
    ann = RegionSampler.annulus([0.0, 0.0], 0.8, 1.2, n_samples=4096, boundary=64)
    rate = certified_rate(vf, metric, ann, transverse=True)
    cond, _, _ = condition_bound(metric, ann)
    duration = 5.0
    dist = RandomPiecewiseDisturbance(0.05, 2, hold=0.05, duration=duration, seed=11, batch=100)
    rep = tube_bound_check(vf, metric, ann, rate, dist, [1.0, 0.0], duration, step=1e-3)
    elapsed = time.perf_counter() - start
    ok = (cond == 1.0 and rep.n_runs == 100 and rep.passed and not rep.inconclusive
          and elapsed < 60.0)
    acceptance(6, "tube bound", ok,
               f"rate={rate:.3f} bound={rep.bound:.4f} worst={rep.worst_distance:.4f} "
               f"t={elapsed:.1f}s")
    assert ok


def test_07_learning_round_trip(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    centers = np.exp(-np.linspace(0.0, 1.0, 10))
    w_g = rng.normal(scale=30.0, size=10)
    tr = TransformationSystem(k=25.0, b=10.0, goal=[1.0],
                              forcing=GaussianForcing(centers, 0.05, w_g))
    demo, phase = demonstration_from_system(tr, ExponentialPhase(alpha_x=1.0), [1.0], [0.0],
                                            duration=4.0)
    fit = fit_weights(compute_target_forcing(demo), phase,
                      GaussianForcing(centers, 0.05, np.zeros(10)), ridge=0.0)
    err_g = float(np.max(np.abs(fit.weights[:, 0] - w_g)))

    vm_centers = np.linspace(-np.pi, np.pi, 12, endpoint=False)
    w_v = rng.normal(size=(12, 2))
    tr = TransformationSystem(k=25.0, b=10.0, forcing=VonMisesForcing(vm_centers, 0.4, w_v))
    demo, phase = demonstration_from_system(tr, Hopf(), [1.0, 0.0], [0.0], duration=2.0)
    fit = fit_weights(compute_target_forcing(demo), phase,
                      VonMisesForcing(vm_centers, 0.4, np.zeros((12, 2))), ridge=0.0)
    err_v = float(np.max(np.abs(fit.weights[:, 0] - w_v)))
    elapsed = time.perf_counter() - start
    ok = err_g < 1e-6 and err_v < 1e-6 and elapsed < 5.0
    acceptance(7, "learning round trip", ok,
               f"gaussian err={err_g:.1e} von Mises err={err_v:.1e} t={elapsed:.1f}s")
    assert ok


def test_08_diffeomorphic_scaling(acceptance):
    hopf = Hopf()
    s = 1.7
    amap = AffineMap(s, rotation_matrix(0.6), [0.4, -0.3])
    vf = apply_diffeomorphism(hopf.field(), amap)
    cfg = IntegratorConfig(1e-3, 12.0)
    traj = integrate(vf, amap.forward([0.5, 0.2]), cfg)
    late = traj.window(6.0, None)
    radius_err = float(np.max(np.abs(np.linalg.norm(late.x - amap.shift, axis=1) - s * hopf.radius)))
    normal = amap.rotation @ np.array([0.0, -1.0])
    period = estimate_period(late, normal, float(normal @ amap.shift)).period
    period_err = abs(period - hopf.period())

    ann = RegionSampler.annulus([0.0, 0.0], 0.8, 1.2, n_samples=2048, boundary=64)
    rate = certified_rate(hopf.field(), Metric.identity(2), ann, transverse=True)
    moved = RegionSampler.from_points(amap.forward(ann.samples()), name="T(annulus)")
    cert = check_transverse_contraction(vf, pushforward_metric(Metric.identity(2), amap),
                                        moved, rate)
    ok = radius_err < 1e-4 and period_err < 1e-4 and cert.passed
    acceptance(8, "diffeomorphic scaling", ok,
               f"radius err={radius_err:.1e} period err={period_err:.1e} "
               f"recertified at rate {rate:.4f} (margin {cert.worst_margin:.1e})")
    assert ok


def _spring_damper_metric(k, b):
    a = np.array([[0.0, 1.0], [-k, -b]])
    return a, solve_continuous_lyapunov(a.T, -np.eye(2))


def test_09_hierarchy_certificates(acceptance):
    # reference -> canonical -> transformation cascade, each layer certified on its own
    ref = ReferenceSystem(gain=2.0, command=[1.0])
    ref_vf = VectorField(1, lambda r, t=0.0: ref.gain * (1.0 - r),
                         lambda r, t=0.0: np.broadcast_to(-ref.gain * np.eye(1),
                                                          np.shape(r)[:-1] + (1, 1)))
    c_ref = check_contraction(ref_vf, Metric.identity(1),
                              RegionSampler.box([-2.0], [2.0], n_samples=64), 1.0)
    c_can = check_transverse_contraction(Hopf().field(), Metric.identity(2),
                                         RegionSampler.annulus([0, 0], 0.8, 1.2, n_samples=512),
                                         0.1)
    a, m = _spring_damper_metric(100.0, 20.0)
    tr_vf = VectorField(2, lambda z, t=0.0: z @ a.T,
                        lambda z, t=0.0: np.broadcast_to(a, np.shape(z)[:-1] + (2, 2)))
    tr_box = RegionSampler.box([-1, -1], [1, 1], n_samples=64)
    tr_rate = 0.5 * certified_rate(tr_vf, Metric.from_matrix(m), tr_box)
    c_tr = check_contraction(tr_vf, Metric.from_matrix(m), tr_box, tr_rate)
    cascade = check_hierarchy([c_ref, c_can, c_tr])
    contract_only = check_hierarchy([c_ref, c_tr])
    try:
        check_hierarchy([c_can, c_can])
        two_transverse_rejected = False
    except UnsupportedCompositionError:
        two_transverse_rejected = True

    # transverse region K (annulus) containing a contracting disk C around the stop goal
    goal = np.array([1.0, 0.0])
    rule = InhibitionRule(nodes=(0,), goal=goal, radius=0.3, gain=50.0, mode="strict")
    stopped = coupled_canonical_field(CouplingGraph(1, {}), Hopf(), inhibition=rule)
    k_reg = RegionSampler.annulus([0, 0], 0.8, 1.2, n_samples=1024, boundary=64)
    c_reg = RegionSampler.ball(goal, 0.3, n_samples=1024, boundary=64)
    inner = Hopf().field()
    pulled = VectorField(2, lambda x, t=0.0: inner(x) + rule.gain * (goal - x),
                         lambda x, t=0.0: inner.jacobian(x) - rule.gain * np.eye(2))
    t_cert = check_transverse_contraction(inner, Metric.identity(2), k_reg, 0.1)
    c_cert = check_contraction(pulled, Metric.identity(2), c_reg, 1.0)
    pred = check_hierarchy([t_cert, c_cert], mode="intersection", regions=(k_reg, c_reg))
    rng = np.random.default_rng(5)
    pool = np.vstack([k_reg.samples(), c_reg.samples()])
    starts = pool[rng.choice(len(pool), 20, replace=False)]
    finals = np.array([integrate(stopped, x0, IntegratorConfig(1e-3, 4.0)).x[-1] for x0 in starts])
    spread = float(np.max(np.linalg.norm(finals - finals.mean(axis=0), axis=1)))
    residual = float(np.max(np.linalg.norm(pulled(finals), axis=1)))
    ok = (cascade.kind == "transverse" and cascade.passed and contract_only.kind == "contraction"
          and two_transverse_rejected and pred.passed and spread < 1e-4 and residual < 1e-6)
    acceptance(9, "hierarchy certificates", ok,
               f"cascade={cascade.kind}/{'PASS' if cascade.passed else 'FAIL'} "
               f"equilibrium spread over 20 starts={spread:.1e}")
    assert ok


def test_10_numerics(acceptance):
    # RK4 order on two analytic oracles
    a = np.array([[0.0, 1.0], [-4.0, -0.2]])
    lin = VectorField(2, lambda x, t=0.0: x @ a.T)
    exact = linear_flow(a, [1.0, 0.0], 1.0)
    e_lin = [np.linalg.norm(integrate(lin, [1.0, 0.0], IntegratorConfig(h, 1.0)).x[-1] - exact)
             for h in (0.02, 0.01)]
    hopf = Hopf().field()
    exact_h = hopf_closed_form([0.3, 0.4], 1.0)
    e_hopf = [np.linalg.norm(integrate(hopf, [0.3, 0.4], IntegratorConfig(h, 1.0)).x[-1] - exact_h)
              for h in (0.02, 0.01)]
    ratios = [e_lin[0] / e_lin[1], e_hopf[0] / e_hopf[1]]

    # matrix-measure subadditivity on 1000 random pairs, three norms
    rng = np.random.default_rng(10)
    pa, pb = rng.normal(size=(2, 1000, 4, 4)) * rng.uniform(0.1, 10, (2, 1000, 1, 1))
    sub = max(float(np.max(matrix_measure(pa + pb, nm) - matrix_measure(pa, nm)
                           - matrix_measure(pb, nm))) for nm in (1, 2, np.inf))

    # transverse restriction against independent projected sampling
    lift = rng.normal(size=(3, 3))
    m3 = lift @ lift.T + 2.0 * np.eye(3)

    def f3(x, t=0.0):
        return np.stack([x[..., 1] - x[..., 0] ** 3, -x[..., 0] + np.sin(x[..., 2]),
                         -x[..., 2] + x[..., 0] * x[..., 1]], axis=-1)

    vf3 = VectorField(3, f3)
    xs3 = rng.uniform(-1.0, 1.0, (100, 3))
    got3, _, _ = transverse_margins(vf3, Metric.from_matrix(m3), xs3)
    diff3 = 0.0
    for x, g in zip(xs3, got3):
        j = vf3.jacobian(x)
        diff3 = max(diff3, abs(g - projected_plane_max(j.T @ m3 + m3 @ j, m3, vf3(x))))
    xs2 = RegionSampler.annulus([0, 0], 0.8, 1.2, n_samples=100).samples()
    got2, _, _ = transverse_margins(hopf, Metric.identity(2), xs2)
    diff2 = 0.0
    for x, g in zip(xs2, got2):
        j = hopf.jacobian(x)
        diff2 = max(diff2, abs(g - projected_brute_force(j.T + j, np.eye(2), hopf(x), n_dirs=100)))
    ok = (all(8.0 <= r <= 32.0 for r in ratios) and sub <= 1e-9 and diff2 < 1e-6
          and diff3 < 1e-6)
    acceptance(10, "numerics", ok,
               f"RK4 ratios={ratios[0]:.2f},{ratios[1]:.2f} subadditivity slack={sub:.1e} "
               f"transverse diff 2-D={diff2:.1e} 3-D={diff3:.1e}")
    assert ok

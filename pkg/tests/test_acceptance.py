"""Acceptance gate: every release criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -s`` to see one line per
criterion.  The bundled benchmark (16 scenarios x 50 seeds) is executed once
per session and shared across the criteria that consume it.
"""

import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from oracles import (
    fibonacci_sphere,
    mvee_oracle_volume,
    qp_oracle,
    quadratic_form,
    random_rotation,
)

from aegis.barrier import (
    AugmentedState,
    EEGeometry,
    _barrier_terms,
    _gradients,
    _world_shape,
    _world_shape_inv,
)
from aegis.cli import main as cli_main
from aegis.filter import (
    PLANT_GAIN,
    Action,
    FilterParams,
    alpha,
    filter_step,
    init_filter_state,
    init_virtual_state,
    solve_safety_qp,
)
from aegis.geometry import Ellipsoid, ellipsoids_intersect, fit_mvee
from aegis.sim import compute_metrics, run_episode
from aegis.suite import builtin_suite

SEEDS = 50


def _report(criterion: str, detail: str) -> None:
    print(f"[PASS] {criterion}: {detail}")


@pytest.fixture(scope="session")
def suite_results():
    scenarios = builtin_suite()
    t0 = time.perf_counter()
    on = {}
    for s in scenarios:
        on[s.name] = [run_episode(s, True, seed) for seed in range(SEEDS)]
    on_seconds = time.perf_counter() - t0
    off = {}
    for s in scenarios:
        off[s.name] = [run_episode(s, False, seed) for seed in range(SEEDS)]
    return SimpleNamespace(scenarios=scenarios, on=on, off=off, on_seconds=on_seconds)


def test_criterion_1_forward_invariance(suite_results):
    """Filter-on episodes stay in the safe set and never intersect truth."""
    worst_h = np.inf
    intersections = 0
    episodes = 0
    for name, rows in suite_results.on.items():
        for trace, result in rows:
            episodes += 1
            finite = trace.h[np.isfinite(trace.h)]
            if finite.size:
                worst_h = min(worst_h, float(finite.min()))
            intersections += int(np.count_nonzero(trace.collided))
    assert episodes == 16 * SEEDS
    assert worst_h >= -1e-6, f"min h over suite = {worst_h}"
    assert intersections == 0
    assert suite_results.on_seconds < 60.0, f"suite took {suite_results.on_seconds:.1f}s"
    _report(
        "criterion 1 (forward invariance)",
        f"{episodes} episodes, min h = {worst_h:.2e} >= -1e-6, "
        f"0 true intersections, {suite_results.on_seconds:.1f}s < 60s",
    )


def test_criterion_2_filter_efficacy(suite_results):
    """Directional improvement: high CAR with the filter, low without."""
    on_results = [r for rows in suite_results.on.values() for _, r in rows]
    off_results = [r for rows in suite_results.off.values() for _, r in rows]
    m_on = compute_metrics(on_results)
    m_off = compute_metrics(off_results)
    assert m_on.car >= 0.95, f"filter-on CAR = {m_on.car}"
    assert m_off.car <= 0.50, f"filter-off CAR = {m_off.car}"
    assert m_on.tsr >= m_off.tsr, f"TSR on {m_on.tsr} < off {m_off.tsr}"
    _report(
        "criterion 2 (efficacy direction)",
        f"CAR on/off = {m_on.car:.3f}/{m_off.car:.3f}, "
        f"TSR on/off = {m_on.tsr:.3f}/{m_off.tsr:.3f}",
    )


def _passthrough_scenario(obstacles):
    from aegis.perception import WorkspaceBounds
    from aegis.sim import PolicySpec, Scenario

    goal = np.array([0.6, 0.0, 0.25])
    return Scenario(
        name="passthrough",
        workspace=WorkspaceBounds((-0.3, -0.6, 0.0), (1.1, 0.6, 0.9)),
        obstacles_true=tuple(obstacles),
        ee_start=(0.0, 0.0, 0.25),
        goal=goal,
        ee_geom=EEGeometry((0.06, 0.12, 0.11)),
        policy=PolicySpec(waypoints=(goal,), k_p=8.0, v_max=1.0, capture_radius=0.01),
        horizon=300,
        dt=0.05,
    )


def test_criterion_3_passthrough_exactness():
    """No/far obstacle: the nominal action survives bit for bit."""
    far = Ellipsoid((0.3, 0.55, 0.85), (0.02, 0.02, 0.02))
    for label, obstacles in (("no-obstacle", []), ("far-obstacle", [far])):
        trace, result = run_episode(_passthrough_scenario(obstacles), True, 0)
        assert result.succeeded
        assert np.array_equal(trace.u_vla, trace.u_safe), label
        assert int(np.count_nonzero(trace.active)) == 0, label
    _report("criterion 3 (passthrough exactness)",
            "u_safe == u_vla bitwise on no- and far-obstacle runs, 0 interventions")


def _random_active_instance(rng):
    geom = EEGeometry(rng.uniform(0.04, 0.15, 3))
    r_ef = random_rotation(rng)
    p_ep = rng.normal(size=3) * 0.3
    axes = rng.uniform(0.03, 0.12, 3)
    rot = random_rotation(rng)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    supp_ee = np.linalg.norm(geom.semi_axes * (r_ef.T @ d))
    supp_ob = np.linalg.norm(axes * (rot.T @ d))
    ob = Ellipsoid(p_ep + d * (supp_ee + supp_ob + rng.uniform(0.002, 0.05)), axes, rot)
    p_s = init_virtual_state(p_ep, r_ef, geom, ob)
    state = AugmentedState(p_ep, r_ef, p_s)
    u_vla = 3.0 * d + 0.5 * rng.normal(size=3)
    return state, geom, ob, u_vla


def test_criterion_4_qp_optimality():
    """Closed form matches a projected-gradient oracle on active instances."""
    rng = np.random.default_rng(41)
    params = FilterParams()
    checked = 0
    worst_cost = 0.0
    worst_kkt = 0.0
    while checked < 1000:
        state, geom, ob, u_vla = _random_active_instance(rng)
        u_v, u_ps, active = solve_safety_qp(u_vla, state, geom, ob, params)
        if not active:
            continue
        checked += 1
        w = _world_shape_inv(state.r_ef, geom.semi_axes)
        s_ob = _world_shape(ob.rotation, ob.semi_axes)
        h, gp, gs = _gradients(w, s_ob, ob.center, state.p_ep, state.p_s)
        tang = gs - float(gs @ state.p_s) * state.p_s
        u_ps_ref = params.virtual_gain * tang
        cost = float(np.sum((u_v - u_vla) ** 2)
                     + params.virtual_weight * np.sum((u_ps - u_ps_ref) ** 2))
        _, _, cost_ref = qp_oracle(u_vla, u_ps_ref, PLANT_GAIN * gp, tang,
                                   -alpha(h, params), state.p_s, params.virtual_weight)
        worst_cost = max(worst_cost, abs(cost - cost_ref) / max(cost_ref, 1e-12))
        dev = np.concatenate([u_v - u_vla, params.virtual_weight * (u_ps - u_ps_ref)])
        row = np.concatenate([PLANT_GAIN * gp, tang])
        rhat = row / np.linalg.norm(row)
        worst_kkt = max(worst_kkt, float(np.linalg.norm(dev - (dev @ rhat) * rhat)))
    assert worst_cost <= 1e-8, f"worst relative cost error {worst_cost}"
    assert worst_kkt < 1e-8, f"worst KKT residual {worst_kkt}"
    _report("criterion 4 (QP optimality)",
            f"1000 active instances, cost err {worst_cost:.2e} <= 1e-8, "
            f"KKT residual {worst_kkt:.2e} < 1e-8")


def test_criterion_5_barrier_correctness():
    """Barrier value vs sampling oracle, gradients vs finite differences."""
    rng = np.random.default_rng(5150)
    n_cfg = 10_000
    dirs = fibonacci_sphere(200_000)

    geoms, states, obstacles = [], [], []
    normals, offsets = np.zeros((n_cfg, 3)), np.zeros(n_cfg)
    h_all = np.zeros(n_cfg)
    support_vecs = np.zeros((n_cfg, 3))
    base_terms = []
    for i in range(n_cfg):
        geom = EEGeometry(rng.uniform(0.04, 0.15, 3))
        r_ef = random_rotation(rng)
        p_ep = rng.normal(size=3) * 0.25
        p_s = rng.normal(size=3)
        p_s /= np.linalg.norm(p_s)
        ob = Ellipsoid(p_ep + rng.normal(size=3) * 0.35,
                       rng.uniform(0.03, 0.12, 3), random_rotation(rng))
        w = _world_shape_inv(r_ef, geom.semi_axes)
        s_ob = _world_shape(ob.rotation, ob.semi_axes)
        h, n, norm_n, support, reach = _barrier_terms(w, s_ob, ob.center, p_ep, p_s)
        nhat = n / norm_n
        h_all[i] = h
        normals[i] = nhat
        # plane offset in world coordinates: n.q = n.p_b
        p_b = (np.linalg.inv(w) @ p_s) + p_ep
        offsets[i] = float(nhat @ p_b)
        support_vecs[i] = s_ob @ nhat
        geoms.append(geom)
        states.append((p_ep, r_ef, p_s))
        obstacles.append(ob)
        base_terms.append((w, s_ob))

    # oracle: min over obstacle-surface samples of signed distance to plane
    centers = np.array([ob.center for ob in obstacles])
    base = np.einsum("ij,ij->i", centers, normals) - offsets
    h_oracle = np.empty(n_cfg)
    chunk = 64
    for lo in range(0, n_cfg, chunk):
        hi = min(lo + chunk, n_cfg)
        m = dirs @ support_vecs[lo:hi].T  # (samples, chunk)
        h_oracle[lo:hi] = base[lo:hi] + m.min(axis=0)
    value_err = float(np.abs(h_all - h_oracle).max())
    assert value_err <= 1e-4, f"max |h - oracle| = {value_err}"

    # analytic gradients vs central differences
    eps = 1e-6
    worst_rel = 0.0
    for i in range(n_cfg):
        p_ep, r_ef, p_s = states[i]
        w, s_ob = base_terms[i]
        ob = obstacles[i]
        h, gp, gs = _gradients(w, s_ob, ob.center, p_ep, p_s)
        fd_p = np.zeros(3)
        fd_s = np.zeros(3)
        for k in range(3):
            d = np.zeros(3)
            d[k] = eps
            fd_p[k] = (_barrier_terms(w, s_ob, ob.center, p_ep + d, p_s)[0]
                       - _barrier_terms(w, s_ob, ob.center, p_ep - d, p_s)[0]) / (2 * eps)
            fd_s[k] = (_barrier_terms(w, s_ob, ob.center, p_ep, p_s + d)[0]
                       - _barrier_terms(w, s_ob, ob.center, p_ep, p_s - d)[0]) / (2 * eps)
        rel_p = np.abs(gp - fd_p).max() / max(1.0, np.abs(fd_p).max())
        rel_s = np.abs(gs - fd_s).max() / max(1.0, np.abs(fd_s).max())
        worst_rel = max(worst_rel, rel_p, rel_s)
    assert worst_rel <= 1e-5, f"worst gradient relative error {worst_rel}"

    # h >= 0 certifies disjointness against the exact geometric oracle
    certified = 0
    for i in range(n_cfg):
        if h_all[i] >= 0.0:
            p_ep, r_ef, _ = states[i]
            ee = Ellipsoid(p_ep, geoms[i].semi_axes, r_ef)
            assert ellipsoids_intersect(ee, obstacles[i]) is False
            certified += 1
    assert certified > 100
    _report("criterion 5 (barrier correctness)",
            f"10^4 configs: |h-oracle| <= {value_err:.2e}, grad rel err "
            f"{worst_rel:.2e} <= 1e-5, {certified} h>=0 cases all disjoint")


def test_criterion_6_mvee():
    """Containment and near-minimal volume on random clouds."""
    rng = np.random.default_rng(66)
    worst_res = 0.0
    worst_vol = 0.0
    for _ in range(100):
        n = int(rng.integers(10, 120))
        shape = rng.uniform(0.05, 1.0, 3)
        pts = rng.normal(size=(n, 3)) * shape + rng.normal(size=3)
        e = fit_mvee(pts, 1e-7)
        res = quadratic_form(e.center, e.semi_axes, e.rotation, pts)
        worst_res = max(worst_res, float(res.max()))
        vol_ref = mvee_oracle_volume(pts, 1e-9)
        worst_vol = max(worst_vol, abs(e.volume - vol_ref) / vol_ref)
    assert worst_res <= 1.0 + 1e-7
    assert worst_vol <= 0.01, f"worst volume deviation {worst_vol}"
    cross = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0],
                      [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64)
    ball = fit_mvee(cross, 1e-9)
    assert np.abs(ball.center).max() <= 1e-6
    assert np.abs(ball.semi_axes - 1.0).max() <= 1e-6
    _report("criterion 6 (MVEE)",
            f"100 clouds: max residual {worst_res - 1.0:.2e} <= 1e-7, "
            f"volume within {worst_vol * 100:.3f}% of oracle, cross-polytope ok")


def test_criterion_7_perception_pipeline():
    """Two-view grounding of a known box plus exact stage-rule oracles."""
    import sys

    sys.path.insert(0, str(Path(__file__).parent))
    from test_perception import box_surface_samples, two_view_box_scene

    from aegis.perception import (
        BBox,
        PipelineConfig,
        WorkspaceBounds,
        crop_workspace,
        obstacle_pipeline,
        trim_farthest,
    )

    box, views = two_view_box_scene()
    bounds = WorkspaceBounds((0.0, -0.6, 0.0), (1.1, 0.6, 0.9))
    ell = obstacle_pipeline(views, BBox(0, 0, 127, 127), bounds, PipelineConfig())
    surface = box_surface_samples(box, n=20_000)
    res = quadratic_form(ell.center, ell.semi_axes, ell.rotation, surface)
    contained = float(np.mean(res <= 1.0 + 1e-6))
    center_err = float(np.linalg.norm(ell.center - 0.5 * (box.min_corner + box.max_corner)))
    assert contained >= 0.99, f"surface containment {contained}"
    assert center_err <= 0.02, f"center error {center_err}"

    rng = np.random.default_rng(77)
    pts = rng.uniform(-1.0, 1.0, (500, 3))
    ws = WorkspaceBounds((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
    got = crop_workspace(pts, ws)
    expect = np.array([p for p in pts if all(-0.5 < c < 0.5 for c in p)])
    np.testing.assert_array_equal(got, expect)

    trimmed = trim_farthest(pts, 0.2)
    centroid = pts.mean(axis=0)
    d = np.linalg.norm(pts - centroid, axis=1)
    order = sorted(range(500), key=lambda i: (d[i], i))
    keep = sorted(order[:400])
    np.testing.assert_array_equal(trimmed, pts[keep])
    _report("criterion 7 (perception pipeline)",
            f"containment {contained:.4f} >= 0.99, center err {center_err * 100:.2f}cm "
            f"<= 2cm, trim/crop rules match elementwise oracles exactly")


def test_criterion_8_latency():
    """Median filter_step wall time stays under a millisecond."""
    geom = EEGeometry((0.06, 0.12, 0.11))
    params = FilterParams()
    ob = Ellipsoid((0.20, 0.02, 0.0), (0.05, 0.05, 0.07))
    p = np.zeros(3)
    r = np.eye(3)
    fstate = init_filter_state(p, r, geom, ob)
    action = Action((1.0, 0.1, -0.05), (0.0, 0.0, 0.0), 0.3)
    n_calls = 100_000
    samples = np.empty(n_calls)
    for i in range(n_calls):
        t0 = time.perf_counter_ns()
        _, fstate = filter_step(action, p, r, geom, ob, fstate, 0.05, params)
        samples[i] = time.perf_counter_ns() - t0
    median_ms = float(np.median(samples)) / 1e6
    assert median_ms < 1.0, f"median filter_step latency {median_ms:.3f} ms"
    _report("criterion 8 (latency)",
            f"median filter_step = {median_ms * 1000:.1f} us < 1 ms over 10^5 calls")


def test_criterion_9_determinism(tmp_path):
    """Identical runs produce byte-identical traces and tables."""
    from aegis.sim import save_scenario

    suite_dir = tmp_path / "suite"
    suite_dir.mkdir()
    for s in builtin_suite()[:2]:
        save_scenario(suite_dir / f"{s.name}.toml", s)
    scenario_path = next(suite_dir.glob("*.toml"))

    outs = []
    for run_dir in ("r1", "r2"):
        out = tmp_path / run_dir
        assert cli_main(["run", "--scenario", str(scenario_path), "--filter", "on",
                         "--seeds", "3", "--out", str(out)]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].glob("trace_*.csv")) + ["summary.csv"]
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    benches = []
    for run_dir in ("b1", "b2"):
        out = tmp_path / run_dir
        assert cli_main(["bench", "--suite", str(suite_dir), "--seeds", "2",
                         "--out", str(out)]) == 0
        benches.append((out / "bench.csv").read_bytes())
    assert benches[0] == benches[1]
    _report("criterion 9 (determinism)",
            f"{len(names)} trace/summary files and the bench table byte-identical "
            f"across reruns")

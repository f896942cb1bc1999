import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_ba_problem
from vslam.geometry import SE3Pose, Sim3Transform, rotation_distance
from vslam.optim import (
    BAProblem,
    DisconnectedGraphError,
    OptimizationError,
    Sim3Edge,
    SolverConfig,
    huber,
    loop_composition_error,
    rms_angular_error,
    solve_ba_dense,
    solve_global_ba,
    solve_local_ba,
    solve_motion_only,
    solve_pose_graph_sim3,
)

seeds = st.integers(0, 2**32 - 1)


@given(st.floats(0, 100), st.floats(0.1, 10))
def test_huber_is_continuous_and_bounded_by_square(e, delta):
    cost, w = huber(np.array([e * e]), delta)
    assert cost[0] <= e * e + 1e-9
    assert 0 < w[0] <= 1
    if e <= delta:
        assert cost[0] == pytest.approx(e * e)


# -- motion-only ----------------------------------------------------------------


def motion_scene(rng, n=50):
    pose = SE3Pose.from_rt(np.eye(3), [0.1, -0.2, 0.3])
    P = rng.uniform([-3, -2, 4], [3, 2, 9], (n, 3))
    pc = pose.apply(P)
    return pose, P, pc / np.linalg.norm(pc, axis=1, keepdims=True)


def test_motion_only_at_optimum_does_not_move(rng):
    pose, P, b = motion_scene(rng)
    res = solve_motion_only(pose, P, b, 1e-3)
    assert np.abs(res.pose.matrix() - pose.matrix()).max() < 1e-12
    assert res.inliers.all()


@given(seeds)
def test_motion_only_recovers_perturbed_pose(seed):
    rng = np.random.default_rng(seed)
    pose, P, b = motion_scene(rng)
    axis = rng.normal(size=3)
    start = SE3Pose.exp(np.concatenate([0.1 * rng.normal(size=3) / np.sqrt(3), np.deg2rad(5) * axis / np.linalg.norm(axis)])) @ pose
    res = solve_motion_only(start, P, b, 1e-3, SolverConfig(max_iterations=30))
    assert rotation_distance(res.pose.R, pose.R) < 1e-6
    assert np.linalg.norm(res.pose.t - pose.t) < 1e-6


def test_motion_only_flags_outliers(rng):
    pose, P, b = motion_scene(rng, 100)
    bad = rng.choice(100, 20, replace=False)
    b[bad] = b[bad] + rng.normal(scale=0.05, size=(20, 3))
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    start = SE3Pose.exp([0.02, 0, 0, 0, 0.02, 0]) @ pose
    res = solve_motion_only(start, P, b, 1e-3, SolverConfig(max_iterations=30))
    assert rotation_distance(res.pose.R, pose.R) < 1e-3 and np.linalg.norm(res.pose.t - pose.t) < 1e-3
    assert not res.inliers[bad].any()
    assert res.inliers.sum() == 80


def test_motion_only_needs_three_points():
    with pytest.raises(OptimizationError):
        solve_motion_only(SE3Pose.identity(), np.ones((2, 3)), np.ones((2, 3)), 1e-3)


# -- bundle adjustment ---------------------------------------------------------


def test_ba_at_ground_truth_stays_put(rng):
    prob, poses, points = make_ba_problem(rng)
    res = solve_local_ba(prob)
    assert res.costs[-1] < 1e-16
    assert np.abs(res.points - points).max() < 1e-10
    assert max(np.abs(a.matrix() - b.matrix()).max() for a, b in zip(res.poses, poses)) < 1e-10


def test_sparse_matches_dense_reference(rng):
    prob, _, _ = make_ba_problem(rng, pose_noise=0.01, point_noise=0.05, obs_noise=1e-3)
    cfg = SolverConfig(max_iterations=30)
    sparse, dense = solve_local_ba(prob, cfg), solve_ba_dense(prob, cfg)
    r_s = rms_angular_error(prob, sparse.poses, sparse.points)
    r_d = rms_angular_error(prob, dense.poses, dense.points)
    assert r_s < 1.05 * r_d


def test_fixed_poses_are_bit_identical(rng):
    prob, _, _ = make_ba_problem(rng, n_fixed=2, pose_noise=0.01, point_noise=0.05)
    res = solve_local_ba(prob)
    for k in range(2):
        assert res.poses[k] is prob.poses[k] or np.array_equal(res.poses[k].matrix(), prob.poses[k].matrix())
    assert np.abs(res.points - prob.points).max() > 1e-3


def test_ba_requires_a_gauge(rng):
    prob, _, _ = make_ba_problem(rng, n_fixed=0)
    with pytest.raises(OptimizationError):
        solve_local_ba(prob)


def test_global_ba_single_keyframe_is_noop():
    P = np.array([[0, 0, 5.0], [1, 0, 5.0]])
    res = solve_global_ba([SE3Pose.identity()], P, [0, 0], [0, 1], P / np.linalg.norm(P, axis=1, keepdims=True), 1e-3)
    np.testing.assert_array_equal(res.points, P)


def test_global_equals_local_with_gauge_fixed(rng):
    prob, _, _ = make_ba_problem(rng, pose_noise=0.01, point_noise=0.05, obs_noise=1e-3)
    cfg = SolverConfig(max_iterations=15)
    local = solve_local_ba(prob, cfg)
    glob = solve_global_ba(prob.poses, prob.points, prob.cam, prob.pt, prob.bearings, prob.sigmas, cfg, gauge=0)
    assert np.abs(local.points - glob.points).max() < 1e-8


def test_ba_costs_never_increase(rng):
    prob, _, _ = make_ba_problem(rng, pose_noise=0.02, point_noise=0.1, obs_noise=2e-3)
    res = solve_local_ba(prob, SolverConfig(max_iterations=30))
    assert all(b <= a for a, b in zip(res.costs, res.costs[1:]))


def test_ba_problem_validation():
    with pytest.raises(ValueError):
        BAProblem([SE3Pose.identity()], [True], np.zeros((1, 3)), [1], [0], [[0, 0, 1.0]], 1e-3)


# -- pose graph ------------------------------------------------------------------


def chain(n, step):
    nodes = {0: Sim3Transform.identity()}
    for k in range(1, n):
        nodes[k] = nodes[k - 1] @ step
    return nodes


def test_consistent_graph_has_zero_residual(rng):
    step = Sim3Transform.exp(np.concatenate([rng.normal(size=6) * 0.3, [0.1]]))
    truth = chain(5, step)
    edges = [Sim3Edge(k, k + 1, step) for k in range(4)] + [Sim3Edge(0, 4, truth[0].inverse() @ truth[4])]
    init = {k: v @ Sim3Transform.exp(rng.normal(scale=0.05, size=7)) if k else v for k, v in truth.items()}
    res = solve_pose_graph_sim3(init, edges, {0})
    assert res.costs[-1] < 1e-16
    for k in truth:
        assert np.abs(res.nodes[k].matrix() - truth[k].matrix()).max() < 1e-8


def test_square_loop_with_scale_drift_closes():
    # each sequential edge grows the scale by 10%; the loop edge measures the
    # accumulated drift, so a consistent solution exists but the initial
    # scale-free nodes are far from it
    turn = Sim3Transform.from_rts(np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0.0]]), [1.0, 0, 0], 1.0)
    drifted = Sim3Transform.from_rts(turn.R, turn.t, 1.1)
    edges = [Sim3Edge(k, k + 1, drifted) for k in range(3)]
    around = drifted @ drifted @ drifted
    loop = Sim3Edge(3, 0, around.inverse())
    nodes = chain(4, turn)
    assert loop_composition_error(nodes, edges + [loop]) > 0.1
    res = solve_pose_graph_sim3(nodes, edges + [loop], {0}, SolverConfig(max_iterations=50))
    assert loop_composition_error(res.nodes, edges + [loop]) < 1e-6
    scales = [(res.nodes[k].inverse() @ res.nodes[k + 1]).s for k in range(3)]
    np.testing.assert_allclose(scales, 1.1, atol=1e-6)


def test_chain_without_loop_composes_measurements(rng):
    steps = [Sim3Transform.exp(rng.normal(scale=0.3, size=7)) for _ in range(3)]
    edges = [Sim3Edge(k, k + 1, s) for k, s in enumerate(steps)]
    init = {k: Sim3Transform.identity() for k in range(4)}
    res = solve_pose_graph_sim3(init, edges, {0}, SolverConfig(max_iterations=50))
    want = Sim3Transform.identity()
    for k, s in enumerate(steps):
        want = want @ s
        assert np.abs(res.nodes[k + 1].matrix() - want.matrix()).max() < 1e-8


def test_disconnected_nodes_are_named():
    nodes = {k: Sim3Transform.identity() for k in range(4)}
    with pytest.raises(DisconnectedGraphError) as err:
        solve_pose_graph_sim3(nodes, [Sim3Edge(0, 1, Sim3Transform.identity())], {0})
    assert err.value.unreachable == [2, 3]

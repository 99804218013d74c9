import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hocue.alignment import (
    HandJoints,
    IcpConfig,
    JointWeights,
    PointCloud,
    apply_similarity,
    first_frame_rotation_align,
    icp_rotation,
    umeyama_align,
    weighted_procrustes,
)
from hocue.errors import DegenerateGeometry, DegenerateJoints, DegenerateTrajectory, InsufficientPoints
from hocue.geometry import quat_angle, quat_from_matrix, quat_mul, quat_to_matrix
from hocue.synth import canonical_hand
from hocue.trajectory import Trajectory

from conftest import random_walk_trajectory
from oracles import brute_nn_residual, geodesic, procrustes_horn, procrustes_svd, random_rotation, rotation_about


def _spread_points(rng, n):
    # anisotropic blob so no rotation maps it onto itself
    return rng.normal(size=(n, 3)) * np.array([1.0, 0.6, 0.3]) + np.array([0.2, 0.0, 0.0]) * rng.random((n, 1)) ** 2


# ICP


def test_icp_identity_on_shuffled_copy(rng):
    P = _spread_points(rng, 400)
    R, rep = icp_rotation(PointCloud(P), PointCloud(rng.permutation(P)))
    assert np.linalg.norm(R - np.eye(3)) < 1e-9
    assert rep.residual < 1e-12
    assert rep.converged


@pytest.mark.parametrize("n", [500, 200])  # kd-tree path and brute-force path
def test_icp_recovers_known_rotation(rng, n):
    P = _spread_points(rng, n)
    R0 = rotation_about([0, 1, 0], math.radians(10))
    Q = P @ R0.T + np.array([3.0, -1.0, 2.0])
    R, rep = icp_rotation(PointCloud(P), PointCloud(Q))
    assert math.degrees(geodesic(R, R0)) < 0.1
    # the reported residual is the true nearest-neighbour residual at the optimum
    a = P - P.mean(axis=0)
    b = Q - Q.mean(axis=0)
    assert abs(rep.residual - brute_nn_residual(a @ R.T, b)) < 1e-12


def test_icp_collinear_flags_degenerate():
    line = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
    with pytest.warns(DegenerateGeometry):
        R, rep = icp_rotation(PointCloud(line), PointCloud(line + 5.0), IcpConfig(min_points=3))
    assert rep.degenerate
    assert rep.converged
    assert rep.residual < 1e-12


def test_icp_insufficient_points(rng):
    few = PointCloud(rng.normal(size=(10, 3)))
    many = PointCloud(rng.normal(size=(100, 3)))
    with pytest.raises(InsufficientPoints) as exc:
        icp_rotation(many, few)
    assert exc.value.side == "target"
    assert exc.value.count == 10


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1))
def test_icp_invariant_to_order_and_translation(seed):
    rng = np.random.default_rng(seed)
    P = _spread_points(rng, 300)
    R0 = rotation_about(rng.normal(size=3), math.radians(rng.uniform(0, 8)))
    Q = P @ R0.T
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegenerateGeometry)
        R1, _ = icp_rotation(PointCloud(P), PointCloud(Q))
        R2, _ = icp_rotation(PointCloud(rng.permutation(P) + rng.normal(size=3)), PointCloud(rng.permutation(Q) - 7.0))
    assert np.linalg.norm(R1 - R2) < 1e-9


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.05))
def test_icp_residual_history_non_increasing(seed, noise):
    rng = np.random.default_rng(seed)
    P = _spread_points(rng, 300)
    R0 = rotation_about(rng.normal(size=3), math.radians(rng.uniform(0, 15)))
    Q = P @ R0.T + rng.normal(scale=noise, size=P.shape)
    _, rep = icp_rotation(PointCloud(P), PointCloud(Q[: 250]))
    h = np.asarray(rep.history)
    assert np.all(np.diff(h) <= 1e-12)


def test_icp_subsampling_is_deterministic(rng):
    P = _spread_points(rng, 3000)
    Q = P @ rotation_about([1, 0, 0], 0.05).T
    cfg = IcpConfig(max_points=500, seed=3)
    R1, _ = icp_rotation(PointCloud(P), PointCloud(Q), cfg)
    R2, _ = icp_rotation(PointCloud(P), PointCloud(Q), cfg)
    np.testing.assert_array_equal(R1, R2)


# weighted Procrustes


def _hand(rng):
    return canonical_hand() + rng.normal(scale=0.02, size=(21, 3))


def test_procrustes_identity(rng):
    J = HandJoints(_hand(rng))
    assert np.linalg.norm(weighted_procrustes(J, J) - np.eye(3)) < 1e-12


def test_procrustes_known_rotation(rng):
    Ji = _hand(rng)
    R0 = rotation_about([1, 0, 0], math.radians(30))
    Jj = (Ji - Ji[0]) @ R0.T + np.array([0.5, -0.2, 1.0])
    R = weighted_procrustes(HandJoints(Ji), HandJoints(Jj))
    assert np.linalg.norm(R - R0) < 1e-9


def test_procrustes_concentrated_weights(rng):
    Ji = _hand(rng)
    R0 = random_rotation(rng)
    Jj = (Ji - Ji[0]) @ R0.T
    chosen = [4, 8, 16]
    others = [k for k in range(1, 21) if k not in chosen]
    Jj[others] += rng.normal(scale=0.3, size=(len(others), 3))
    w = np.zeros(21)
    w[chosen] = 1.0 / 3.0
    R = weighted_procrustes(HandJoints(Ji), HandJoints(Jj), JointWeights(w))
    # oracle: unweighted Procrustes on just the selected joints (wrist excluded, it has zero offset)
    a = Ji[chosen] - Ji[0]
    b = Jj[chosen] - Jj[0]
    expected = procrustes_svd(a, b, np.ones(3))
    assert np.linalg.norm(R - expected) < 1e-9
    assert np.linalg.norm(R - R0) < 1e-9


def test_procrustes_matches_two_oracles(rng):
    for _ in range(500):
        Ji, Jj = rng.normal(size=(21, 3)), rng.normal(size=(21, 3))
        w = rng.random(21)
        R = weighted_procrustes(HandJoints(Ji), HandJoints(Jj), JointWeights(w))
        a, b = Ji - Ji[0], Jj - Jj[0]
        assert np.linalg.norm(R - procrustes_svd(a, b, w)) < 1e-9
        assert np.linalg.norm(R - procrustes_horn(a, b, w)) < 1e-8


@given(st.integers(0, 2**31 - 1))
def test_procrustes_proper_on_mirrored_input(seed):
    rng = np.random.default_rng(seed)
    Ji = rng.normal(size=(21, 3))
    mirror = np.diag([1.0, 1.0, -1.0]) @ random_rotation(rng)
    Jj = Ji @ mirror.T
    R = weighted_procrustes(HandJoints(Ji), HandJoints(Jj), JointWeights(rng.random(21) + 0.01))
    assert abs(np.linalg.det(R) - 1.0) < 1e-12
    assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-12


@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
def test_procrustes_weight_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    Ji, Jj = HandJoints(rng.normal(size=(21, 3))), HandJoints(rng.normal(size=(21, 3)))
    w = rng.random(21) + 0.01
    R1 = weighted_procrustes(Ji, Jj, JointWeights(w))
    R2 = weighted_procrustes(Ji, Jj, JointWeights(scale * w))
    assert np.linalg.norm(R1 - R2) < 1e-12


def test_procrustes_degenerate_joints():
    line = np.outer(np.arange(21.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateJoints):
        weighted_procrustes(HandJoints(line), HandJoints(line))
    J = np.ones((21, 3))
    J[5, 0] = np.nan
    with pytest.raises(DegenerateJoints):
        weighted_procrustes(HandJoints(J), HandJoints(np.ones((21, 3))))


def test_joint_weights_validation():
    with pytest.raises(ValueError):
        JointWeights(np.zeros(21))
    with pytest.raises(ValueError):
        JointWeights(-np.ones(21))
    with pytest.raises(ValueError):
        JointWeights(np.ones(20))
    assert abs(np.asarray(JointWeights(np.arange(21.0))).sum() - 1.0) < 1e-15


# Umeyama


def test_umeyama_identity(rng):
    t = random_walk_trajectory(rng)
    sim = umeyama_align(t, t)
    assert abs(sim.scale - 1.0) < 1e-9
    assert np.linalg.norm(sim.R - np.eye(3)) < 1e-9
    assert np.linalg.norm(sim.t) < 1e-9


def test_umeyama_pure_scale(rng):
    ref = random_walk_trajectory(rng)
    pred = ref.copy()
    pred.translations = 2.0 * ref.translations
    sim = umeyama_align(pred, ref)
    assert abs(sim.scale - 0.5) < 1e-9
    assert np.linalg.norm(sim.R - np.eye(3)) < 1e-9


def test_umeyama_recovers_similarity(rng):
    for _ in range(100):
        ref = random_walk_trajectory(rng, n=20)
        s0, R0, t0 = rng.uniform(0.2, 5.0), random_rotation(rng), rng.normal(size=3)
        pred = ref.copy()
        pred.translations = s0 * ref.translations @ R0.T + t0
        sim = umeyama_align(pred, ref)
        assert abs(sim.scale - 1.0 / s0) < 1e-8
        assert np.linalg.norm(sim.R - R0.T) < 1e-8
        assert np.linalg.norm(sim.t + R0.T @ t0 / s0) < 1e-8
        assert np.max(np.abs(apply_similarity(pred, sim).translations - ref.translations)) < 1e-9


def test_umeyama_uses_common_frames_only(rng):
    ref = random_walk_trajectory(rng, n=30)
    pred = ref.select(range(5, 25))
    sim = umeyama_align(pred, ref)
    assert abs(sim.scale - 1.0) < 1e-9


@pytest.mark.parametrize("n", [2, 10])
def test_umeyama_degenerate(n):
    line = np.outer(np.arange(n), [1.0, 0.5, 0.0])
    t = Trajectory(np.arange(n), np.tile([1.0, 0, 0, 0], (n, 1)), line)
    with pytest.raises(DegenerateTrajectory):
        umeyama_align(t, t)


# first-frame rotation alignment


def test_first_frame_align_unchanged(rng):
    t = random_walk_trajectory(rng)
    out = first_frame_rotation_align(t, t)
    assert max(quat_angle(p, q) for p, q in zip(out.rotations, t.rotations)) < 1e-12


def test_first_frame_align_cancels_constant_offset(rng):
    ref = random_walk_trajectory(rng)
    q0 = quat_from_matrix(random_rotation(rng))
    pred = ref.copy()
    pred.rotations = np.array([quat_mul(q0, q) for q in ref.rotations])
    out = first_frame_rotation_align(pred, ref)
    assert max(quat_angle(p, q) for p, q in zip(out.rotations, ref.rotations)) < 1e-12


def test_first_frame_align_random(rng):
    for _ in range(50):
        a, b = random_walk_trajectory(rng, n=10), random_walk_trajectory(rng, n=10)
        b.rotations[0] = quat_from_matrix(random_rotation(rng))
        out = first_frame_rotation_align(a, b)
        assert np.linalg.norm(quat_to_matrix(out.rotations[0]) - quat_to_matrix(b.rotations[0])) < 1e-10
        # relative motion untouched
        Ra, Ro = a.rotation_matrices(), out.rotation_matrices()
        assert np.allclose(Ro[4].T @ Ro[5], Ra[4].T @ Ra[5], atol=1e-12)

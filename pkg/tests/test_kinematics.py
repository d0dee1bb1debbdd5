import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dula.kinematics import (
    N_JOINTS,
    BodyDimensions,
    HandPose,
    InvalidInputError,
    JointLimits,
    body_config_dict,
    clamp_to_limits,
    fk_jacobian,
    forward_kinematics,
    hand_frame,
    load_body_config,
    matrix_to_quat,
    quat_to_matrix,
    rotation_log,
    weighted_pose_error,
    weighted_pose_error_and_grad,
)

LIMITS = JointLimits.default()
angles = arrays(float, N_JOINTS, elements=st.floats(-3.0, 3.0))


def random_postures(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(LIMITS.lower, LIMITS.upper, (n, N_JOINTS))


def test_zero_posture_hangs_arm_down():
    d = BodyDimensions()
    pose = forward_kinematics(np.zeros(N_JOINTS))
    shoulder = np.array([0.0, 0.0, d.torso]) + np.array(d.shoulder_offset)
    expected = shoulder - np.array([0.0, 0.0, d.upper_arm + d.forearm + d.hand])
    np.testing.assert_allclose(pose.position, expected, atol=1e-12)
    np.testing.assert_allclose(pose.rotation, np.eye(3), atol=1e-12)


def test_elbow_right_angle_points_forearm_forward():
    d = BodyDimensions()
    q = np.zeros(N_JOINTS)
    q[6] = np.pi / 2
    elbow = np.array([0.0, 0.0, d.torso]) + np.array(d.shoulder_offset) - [0.0, 0.0, d.upper_arm]
    np.testing.assert_allclose(forward_kinematics(q).position, elbow + [d.forearm + d.hand, 0.0, 0.0], atol=1e-12)


def test_shoulder_flexion_raises_arm_forward():
    q = np.zeros(N_JOINTS)
    q[3] = np.pi / 2
    d = BodyDimensions()
    shoulder = np.array([0.0, 0.0, d.torso]) + np.array(d.shoulder_offset)
    np.testing.assert_allclose(forward_kinematics(q).position, shoulder + [d.upper_arm + d.forearm + d.hand, 0, 0],
                               atol=1e-12)


def test_jacobian_matches_central_differences():
    h = 1e-6
    for q in random_postures(25, seed=1):
        J = fk_jacobian(q)
        for i in range(N_JOINTS):
            dq = np.zeros(N_JOINTS)
            dq[i] = h
            Rp, pp = hand_frame(q + dq)
            Rm, pm = hand_frame(q - dq)
            np.testing.assert_allclose(J[:3, i], (pp - pm) / (2 * h), atol=1e-7)
            omega = rotation_log(Rp @ Rm.T) / (2 * h)
            np.testing.assert_allclose(J[3:, i], omega, atol=1e-7)


def test_pose_error_gradient_matches_central_differences():
    rng = np.random.default_rng(2)
    h = 1e-6
    for q in random_postures(20, seed=3):
        target = forward_kinematics(q + rng.normal(0, 0.3, N_JOINTS))
        _, g = weighted_pose_error_and_grad(q, target, 1.0, 0.1)
        fd = np.empty(N_JOINTS)
        for i in range(N_JOINTS):
            dq = np.zeros(N_JOINTS)
            dq[i] = h
            fp = weighted_pose_error(target, *hand_frame(q + dq), 1.0, 0.1)
            fm = weighted_pose_error(target, *hand_frame(q - dq), 1.0, 0.1)
            fd[i] = (fp - fm) / (2 * h)
        np.testing.assert_allclose(g, fd, atol=1e-7)


def test_pose_error_zero_at_own_pose():
    q = random_postures(1)[0]
    value, grad = weighted_pose_error_and_grad(q, forward_kinematics(q), 1.0, 0.1)
    assert value == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(grad, 0.0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(angles)
def test_fk_is_two_pi_periodic(q):
    R1, p1 = hand_frame(q)
    R2, p2 = hand_frame(q + 2 * np.pi)
    np.testing.assert_allclose(p1, p2, atol=1e-9)
    np.testing.assert_allclose(R1, R2, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(angles)
def test_hand_rotation_is_orthonormal(q):
    R, _ = hand_frame(q)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_batch_fk_matches_single():
    Q = random_postures(40, seed=4)
    R, p = hand_frame(Q)
    for k, q in enumerate(Q):
        Rk, pk = hand_frame(q)
        np.testing.assert_allclose(R[k], Rk, atol=1e-14)
        np.testing.assert_allclose(p[k], pk, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(arrays(float, 4, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_quaternion_round_trip(v):
    quat = v / np.linalg.norm(v)
    back = matrix_to_quat(quat_to_matrix(quat))
    assert back[0] >= 0.0
    # q and -q encode the same rotation
    assert min(np.abs(back - quat).max(), np.abs(back + quat).max()) < 1e-9


def test_rotation_log_angle_of_known_rotation():
    c, s = np.cos(0.7), np.sin(0.7)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    np.testing.assert_allclose(rotation_log(R), [0, 0, 0.7], atol=1e-12)


def test_hand_pose_normalizes_orientation():
    pose = HandPose(np.zeros(3), np.array([-2.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(pose.orientation, [1, 0, 0, 0])
    back = HandPose.from_dict(pose.to_dict())
    np.testing.assert_array_equal(back.orientation, pose.orientation)
    np.testing.assert_array_equal(back.position, pose.position)


def test_hand_pose_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        HandPose(np.array([0.0, np.nan, 0.0]))
    with pytest.raises(InvalidInputError):
        HandPose(np.zeros(3), np.zeros(4))


def test_default_limits_hold_zero_strictly_inside():
    assert LIMITS.contains(np.zeros(N_JOINTS))
    assert np.all(LIMITS.lower < 0) and np.all(LIMITS.upper > 0)


@pytest.mark.parametrize("lower, upper", [
    (np.full(N_JOINTS, -1.0), np.full(N_JOINTS, -0.5)),
    (np.full(N_JOINTS, 1.0), np.full(N_JOINTS, -1.0)),
    (np.full(9, -1.0), np.full(9, 1.0)),
    (np.full(N_JOINTS, -np.inf), np.full(N_JOINTS, 1.0)),
])
def test_invalid_limits_rejected(lower, upper):
    with pytest.raises(InvalidInputError):
        JointLimits(lower, upper)


@pytest.mark.parametrize("q", [np.zeros(9), np.full(N_JOINTS, np.nan), np.zeros((2, 5))])
def test_malformed_posture_rejected(q):
    with pytest.raises(InvalidInputError):
        forward_kinematics(q)


def test_clamp_to_limits():
    q = np.full(N_JOINTS, 10.0)
    np.testing.assert_array_equal(clamp_to_limits(q, LIMITS), LIMITS.upper)
    assert LIMITS.contains(clamp_to_limits(-q, LIMITS))


def test_body_config_round_trip(tmp_path):
    dims = BodyDimensions(torso=0.55, upper_arm=0.31, forearm=0.26, hand=0.09)
    path = tmp_path / "body.json"
    path.write_text(json.dumps(body_config_dict(dims, LIMITS)))
    dims2, limits2 = load_body_config(path)
    assert dims2 == dims
    np.testing.assert_array_equal(limits2.lower, LIMITS.lower)
    np.testing.assert_array_equal(limits2.upper, LIMITS.upper)


def test_body_dimensions_must_be_positive():
    with pytest.raises(InvalidInputError):
        BodyDimensions(torso=0.0)

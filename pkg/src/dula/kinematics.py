"""Ten-DOF upper-body model: joint limits, hand forward kinematics and Jacobian.

Base frame sits at the pelvis of a seated operator: x forward, y left, z up.
The modelled arm is the right arm. Joint order (all revolute, radians)::

    0 torso_flexion         about y        (forward bend positive)
    1 torso_lateral_bend    about x
    2 torso_axial_rotation  about z
    3 shoulder_flexion      about -y       (arm raised forward positive)
    4 shoulder_abduction    about -x       (arm raised sideways positive)
    5 shoulder_rotation     about z        (internal rotation positive)
    6 elbow_flexion         about -y
    7 forearm_pronation     about z
    8 wrist_flexion         about -y
    9 wrist_deviation       about x

Axes are expressed in the frame of the preceding joint. With every angle at
zero the trunk is upright and the arm hangs straight down.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_JOINTS = 10

JOINT_NAMES = (
    "torso_flexion",
    "torso_lateral_bend",
    "torso_axial_rotation",
    "shoulder_flexion",
    "shoulder_abduction",
    "shoulder_rotation",
    "elbow_flexion",
    "forearm_pronation",
    "wrist_flexion",
    "wrist_deviation",
)

JOINT_AXES = np.array(
    [
        [0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, -1.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, -1.0, 0.0],
        [1.0, 0.0, 0.0],
    ]
)

# Anatomical range of motion in degrees, (lower, upper). Static box replacing a
# pose-dependent validity model.
DEFAULT_LIMITS_DEG = (
    (-30.0, 90.0),
    (-40.0, 40.0),
    (-50.0, 50.0),
    (-60.0, 180.0),
    (-40.0, 170.0),
    (-80.0, 90.0),
    (-10.0, 150.0),
    (-85.0, 85.0),
    (-70.0, 80.0),
    (-25.0, 35.0),
)


class InvalidInputError(ValueError):
    """Raised for malformed or non-finite kinematic input."""


def as_posture(q) -> np.ndarray:
    """Validate and return a posture as a float64 array of shape (10,)."""
    arr = np.asarray(q, dtype=float)
    if arr.shape != (N_JOINTS,):
        raise InvalidInputError(f"posture must have {N_JOINTS} angles, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("posture contains non-finite angles")
    return arr


@dataclass(frozen=True)
class JointLimits:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (N_JOINTS,) or hi.shape != (N_JOINTS,):
            raise InvalidInputError("joint limits need 10 lower and 10 upper values")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidInputError("joint limits must be finite")
        if np.any(lo >= hi):
            raise InvalidInputError("each lower limit must be below its upper limit")
        if np.any(lo >= 0.0) or np.any(hi <= 0.0):
            raise InvalidInputError("the zero posture must be strictly inside the limits")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def default(cls) -> JointLimits:
        deg = np.array(DEFAULT_LIMITS_DEG)
        return cls(np.radians(deg[:, 0]), np.radians(deg[:, 1]))

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return list(zip(self.lower.tolist(), self.upper.tolist()))

    def contains(self, q, tol: float = 0.0) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))


@dataclass(frozen=True)
class BodyDimensions:
    """Segment lengths in metres; defaults are 50th-percentile adult values."""

    torso: float = 0.50
    upper_arm: float = 0.30
    forearm: float = 0.27
    hand: float = 0.10
    shoulder_offset: tuple[float, float, float] = (0.0, -0.18, -0.03)

    def __post_init__(self):
        for name in ("torso", "upper_arm", "forearm", "hand"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0.0):
                raise InvalidInputError(f"segment length {name} must be positive, got {value}")
        offset = tuple(float(v) for v in self.shoulder_offset)
        if len(offset) != 3 or not all(np.isfinite(offset)):
            raise InvalidInputError("shoulder_offset must be a finite 3-vector")
        object.__setattr__(self, "shoulder_offset", offset)

    def joint_offsets(self) -> np.ndarray:
        """Translation preceding each joint (in the parent frame), plus the hand tip."""
        off = np.zeros((N_JOINTS + 1, 3))
        off[3] = np.array([0.0, 0.0, self.torso]) + np.array(self.shoulder_offset)
        off[6] = [0.0, 0.0, -self.upper_arm]
        off[8] = [0.0, 0.0, -self.forearm]
        off[10] = [0.0, 0.0, -self.hand]
        return off


def load_body_config(path) -> tuple[BodyDimensions, JointLimits]:
    """Read body dimensions and joint limits from a JSON config file.

    Schema::

        {"segment_lengths": [torso, upper_arm, forearm, hand],
         "shoulder_offset": [x, y, z],              (optional)
         "joint_limits": {"lower": [10 rad], "upper": [10 rad]}}
    """
    doc = json.loads(Path(path).read_text())
    dims = BodyDimensions()
    if "segment_lengths" in doc:
        lengths = doc["segment_lengths"]
        if len(lengths) != 4:
            raise InvalidInputError("segment_lengths needs exactly 4 values")
        kwargs = dict(zip(("torso", "upper_arm", "forearm", "hand"), map(float, lengths)))
        if "shoulder_offset" in doc:
            kwargs["shoulder_offset"] = tuple(doc["shoulder_offset"])
        dims = BodyDimensions(**kwargs)
    limits = JointLimits.default()
    if "joint_limits" in doc:
        limits = JointLimits(doc["joint_limits"]["lower"], doc["joint_limits"]["upper"])
    return dims, limits


def body_config_dict(dims: BodyDimensions, limits: JointLimits) -> dict:
    return {
        "segment_lengths": [dims.torso, dims.upper_arm, dims.forearm, dims.hand],
        "shoulder_offset": list(dims.shoulder_offset),
        "joint_limits": {"lower": limits.lower.tolist(), "upper": limits.upper.tolist()},
    }


# --- rotations and quaternions -------------------------------------------------


def _skew(axis) -> np.ndarray:
    return np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])


def axis_rotation(axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation about a unit axis; broadcasts over ``angle``."""
    angle = np.asarray(angle, dtype=float)
    k = _skew(axis)
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


_SKEW = np.stack([_skew(a) for a in JOINT_AXES])
_SKEW2 = _SKEW @ _SKEW


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=float)
    batch = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    out = np.empty((R.shape[0], 4))
    for n, m in enumerate(R):
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0.0:
            s = 2.0 * np.sqrt(tr + 1.0)
            q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        q = np.array(q)
        q /= np.linalg.norm(q)
        out[n] = q if q[0] >= 0.0 else -q
    return out.reshape(batch + (4,))


def quat_to_matrix(quat) -> np.ndarray:
    w, x, y, z = np.asarray(quat, dtype=float) / np.linalg.norm(quat)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle, angle in [0, pi]) of a rotation matrix."""
    q = matrix_to_quat(R)
    w = q[..., 0]
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1)
    angle = 2.0 * np.arctan2(n, w)
    # sin(angle/2)/(angle/2) -> 1 as n -> 0
    scale = np.where(n > 1e-12, angle / np.where(n > 1e-12, n, 1.0), 2.0)
    return v * scale[..., None]


@dataclass(frozen=True)
class HandPose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        quat = np.asarray(self.orientation, dtype=float).reshape(4)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(quat))):
            raise InvalidInputError("hand pose must be finite")
        norm = np.linalg.norm(quat)
        if norm == 0.0:
            raise InvalidInputError("orientation quaternion has zero norm")
        quat = quat / norm
        if quat[0] < 0.0:
            quat = -quat
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", quat)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    @classmethod
    def from_matrix(cls, R: np.ndarray, p: np.ndarray) -> HandPose:
        return cls(np.asarray(p, dtype=float), matrix_to_quat(R))

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "orientation": self.orientation.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> HandPose:
        return cls(np.array(doc["position"], dtype=float), np.array(doc["orientation"], dtype=float))


# --- forward kinematics --------------------------------------------------------


def _chain(q: np.ndarray, dims: BodyDimensions):
    """World rotation/position of every joint frame; broadcasts over leading dims of q."""
    offsets = dims.joint_offsets()
    batch = q.shape[:-1]
    R = np.broadcast_to(np.eye(3), batch + (3, 3)).copy()
    p = np.zeros(batch + (3,))
    rots, origins = [], []
    s = np.sin(q)[..., None, None]
    c = 1.0 - np.cos(q)[..., None, None]
    eye = np.eye(3)
    for i in range(N_JOINTS):
        p = p + R @ offsets[i]
        origins.append(p)
        rots.append(R)
        R = R @ (eye + s[..., i, :, :] * _SKEW[i] + c[..., i, :, :] * _SKEW2[i])
    p_hand = p + R @ offsets[N_JOINTS]
    return rots, origins, R, p_hand


def hand_frame(q, dims: BodyDimensions | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Hand rotation matrix and position; ``q`` may carry leading batch dimensions."""
    dims = dims or BodyDimensions()
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != N_JOINTS:
        raise InvalidInputError(f"posture must have {N_JOINTS} angles")
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("posture contains non-finite angles")
    _, _, R, p = _chain(q, dims)
    return R, p


def forward_kinematics(q, dims: BodyDimensions | None = None) -> HandPose:
    """Pose of the hand frame for one posture."""
    q = as_posture(q)
    R, p = hand_frame(q, dims)
    return HandPose.from_matrix(R, p)


def fk_jacobian(q, dims: BodyDimensions | None = None) -> np.ndarray:
    """Geometric Jacobian (6x10): rows 0-2 linear velocity, rows 3-5 angular velocity."""
    q = as_posture(q)
    dims = dims or BodyDimensions()
    rots, origins, _, p_hand = _chain(q, dims)
    return _jacobian(rots, origins, p_hand)


def _jacobian(rots, origins, p) -> np.ndarray:
    Z = np.einsum("nij,nj->ni", np.asarray(rots), JOINT_AXES)
    r = p - np.asarray(origins)
    J = np.empty((6, N_JOINTS))
    J[0] = Z[:, 1] * r[:, 2] - Z[:, 2] * r[:, 1]
    J[1] = Z[:, 2] * r[:, 0] - Z[:, 0] * r[:, 2]
    J[2] = Z[:, 0] * r[:, 1] - Z[:, 1] * r[:, 0]
    J[3:] = Z.T
    return J


def clamp_to_limits(q, limits: JointLimits) -> np.ndarray:
    return np.clip(np.asarray(q, dtype=float), limits.lower, limits.upper)


# --- weighted pose error -------------------------------------------------------


def pose_error_terms(target: HandPose, R: np.ndarray, p: np.ndarray):
    """Position residual (target - p) and rotation vector of target * R^T."""
    dp = target.position - p
    rotvec = rotation_log(target.rotation @ np.swapaxes(R, -1, -2))
    return dp, rotvec


def weighted_pose_error(target: HandPose, R, p, w_pos: float, w_ori: float):
    """Squared Sigma-weighted error: w_pos*|dp|^2 + w_ori*theta^2 (geodesic angle)."""
    dp, rotvec = pose_error_terms(target, R, p)
    return w_pos * np.sum(dp * dp, axis=-1) + w_ori * np.sum(rotvec * rotvec, axis=-1)


def weighted_pose_error_and_grad(q, target: HandPose, w_pos: float, w_ori: float,
                                 dims: BodyDimensions | None = None):
    """Value and joint-space gradient of :func:`weighted_pose_error` at one posture."""
    q = as_posture(q)
    dims = dims or BodyDimensions()
    rots, origins, R, p = _chain(q, dims)
    J = _jacobian(rots, origins, p)
    dp, rotvec = pose_error_terms(target, R, p)
    value = w_pos * float(dp @ dp) + w_ori * float(rotvec @ rotvec)
    # d|log(Rt R^T)|^2/dt = -2 e . omega
    grad = -2.0 * w_pos * (J[:3].T @ dp) - 2.0 * w_ori * (J[3:].T @ rotvec)
    return value, grad

"""Rotation, quaternion and rigid-transform primitives.

Quaternions are numpy arrays ordered ``(w, x, y, z)``. Every function that
returns a quaternion returns it unit-norm and canonicalized so that ``w >= 0``
(first nonzero component positive when ``w == 0``). Angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hocue.errors import NonOrthonormalInput

_SLERP_LINEAR_THRESHOLD = 1e-7
_LOG_NEAR_PI = 1e-2


def canonical_quat(q) -> np.ndarray:
    """Normalize ``q`` and pick the representative with ``w >= 0``."""
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError(f"cannot normalize quaternion {q!r}")
    # already-unit input is left bit-for-bit alone so repeated canonicalization is idempotent
    if abs(n - 1.0) > 4.0 * np.finfo(float).eps:
        q = q / n
    for c in q:
        if c > 0.0:
            break
        if c < 0.0:
            q = -q
            break
    return q


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a * b``; ``quat_to_matrix(a*b) == R(a) @ R(b)``."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return canonical_quat([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return canonical_quat([q[0], -q[1], -q[2], -q[3]])


def quat_angle(q_a, q_b) -> float:
    """Geodesic rotation angle between two quaternions, in ``[0, pi]``."""
    q_a = np.asarray(q_a, dtype=float)
    q_b = np.asarray(q_b, dtype=float)
    d = float(np.dot(q_a, q_b))
    if d < 0.0:
        q_b = -q_b
    # half-angle via chord lengths; stays accurate near 0 and near pi
    return 4.0 * math.atan2(np.linalg.norm(q_a - q_b), np.linalg.norm(q_a + q_b))


def quat_same_rotation(q_a, q_b, tol: float = 1e-9) -> bool:
    return quat_angle(q_a, q_b) <= tol


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def check_rotation(R, tol: float = 1e-6) -> np.ndarray:
    """Return ``R`` as a float array; raise ``NonOrthonormalInput`` if it is not in SO(3)."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise NonOrthonormalInput(f"expected a finite 3x3 matrix, got shape {R.shape}")
    ortho = np.linalg.norm(R.T @ R - np.eye(3))
    det = np.linalg.det(R)
    if ortho > tol or abs(det - 1.0) > tol:
        raise NonOrthonormalInput(
            f"matrix is not a proper rotation (|R^T R - I| = {ortho:.3g}, det = {det:.6g})"
        )
    return R


def quat_from_matrix(R) -> np.ndarray:
    """Shepperd's method: branch on the largest of ``(trace, R00, R11, R22)``."""
    R = check_rotation(R)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    k = int(np.argmax([tr, R[0, 0], R[1, 1], R[2, 2]]))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return canonical_quat(q)


def slerp(q_a, q_b, s: float) -> np.ndarray:
    """Spherical linear interpolation from ``q_a`` (s=0) to ``q_b`` (s=1).

    ``q_b`` is flipped onto ``q_a``'s hemisphere first, so the path is always
    the shorter geodesic and ``q`` / ``-q`` inputs are interchangeable. Below a
    half-angle of 1e-7 rad the normalized linear blend is used instead.
    """
    if s == 0.0:
        return canonical_quat(q_a)
    if s == 1.0:
        return canonical_quat(q_b)
    q_a = np.asarray(q_a, dtype=float)
    q_b = np.asarray(q_b, dtype=float)
    q_a = q_a / np.linalg.norm(q_a)
    q_b = q_b / np.linalg.norm(q_b)
    if np.dot(q_a, q_b) < 0.0:
        q_b = -q_b
    theta = 2.0 * math.atan2(np.linalg.norm(q_a - q_b), np.linalg.norm(q_a + q_b))
    if theta < _SLERP_LINEAR_THRESHOLD:
        return canonical_quat((1.0 - s) * q_a + s * q_b)
    sin_theta = math.sin(theta)
    return canonical_quat(
        (math.sin((1.0 - s) * theta) / sin_theta) * q_a + (math.sin(s * theta) / sin_theta) * q_b
    )


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_exp(v) -> np.ndarray:
    """Rodrigues' formula; Taylor coefficients below 1e-8 rad."""
    v = np.asarray(v, dtype=float).reshape(3)
    theta = float(np.linalg.norm(v))
    K = skew(v)
    if theta < 1e-8:
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def rotation_log(R) -> np.ndarray:
    """Rotation vector of ``R``; its norm is the geodesic angle in ``[0, pi]``.

    Within 1e-2 rad of pi the antisymmetric part carries almost no signal, so
    the axis is taken from the dominant eigenvector of the symmetric part
    ``(R + R^T)/2`` (eigenvalue 1); the antisymmetric part only fixes its sign.
    At exactly pi either sign is a valid logarithm.
    """
    R = np.asarray(R, dtype=float)
    axial = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_t = float(np.linalg.norm(axial))
    cos_t = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    theta = math.atan2(sin_t, cos_t)
    if theta < 1e-8:
        return axial * (1.0 + theta * theta / 6.0)
    if theta < math.pi - _LOG_NEAR_PI:
        return axial * (theta / sin_t)
    w, V = np.linalg.eigh(0.5 * (R + R.T))
    axis = V[:, int(np.argmax(w))]
    if np.dot(axis, axial) < 0.0:
        axis = -axis
    return theta * axis / np.linalg.norm(axis)


def rotation_angle(R) -> float:
    R = np.asarray(R, dtype=float)
    axial = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return math.atan2(float(np.linalg.norm(axial)), 0.5 * (np.trace(R) - 1.0))


def rotation_distance(R_a, R_b) -> float:
    """Geodesic angle of ``R_a^T R_b``."""
    return rotation_angle(np.asarray(R_a).T @ np.asarray(R_b))


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return rotation_exp(axis / np.linalg.norm(axis) * angle)


def axis_angle_quat(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return canonical_quat(np.concatenate([[math.cos(angle / 2.0)], math.sin(angle / 2.0) * axis]))


def project_to_rotation(M) -> np.ndarray:
    """Nearest proper rotation to ``M`` in Frobenius norm."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    d = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def quat_average(quats, weights=None) -> np.ndarray:
    """Chordal mean: dominant eigenvector of ``sum w q q^T`` (sign-invariant)."""
    Q = np.asarray(quats, dtype=float).reshape(-1, 4)
    w = np.ones(len(Q)) if weights is None else np.asarray(weights, dtype=float)
    A = (Q * w[:, None]).T @ Q
    vals, vecs = np.linalg.eigh(A)
    return canonical_quat(vecs[:, int(np.argmax(vals))])


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x -> R x + t`` with ``R`` stored as a unit quaternion."""

    rotation: np.ndarray = field(default_factory=quat_identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", canonical_quat(self.rotation))
        t = np.asarray(self.translation, dtype=float).reshape(3).copy()
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(quat_from_matrix(T[:3, :3]), T[:3, 3])

    @classmethod
    def from_rt(cls, R, t) -> "Pose":
        return cls(quat_from_matrix(R), t)

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(
            quat_mul(self.rotation, other.rotation),
            self.R @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose":
        q_inv = quat_conj(self.rotation)
        return Pose(q_inv, -(quat_to_matrix(q_inv) @ self.translation))

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.R.T + self.translation

    def is_close(self, other: "Pose", rot_tol: float = 1e-9, trans_tol: float = 1e-9) -> bool:
        return (
            quat_angle(self.rotation, other.rotation) <= rot_tol
            and float(np.linalg.norm(self.translation - other.translation)) <= trans_tol
        )

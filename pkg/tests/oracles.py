"""Reference implementations written independently of the package code.

They use different algorithms (matrix exponential, Horn's quaternion
eigenproblem, brute-force nearest neighbours) so agreement is meaningful.
"""

import numpy as np
from scipy.linalg import expm
from scipy.spatial.transform import Rotation


def hat(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def exp_so3(v):
    return expm(hat(np.asarray(v, dtype=float)))


def random_rotation(rng):
    return Rotation.random(random_state=rng).as_matrix()


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=float)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()


def geodesic(R_a, R_b):
    return float(Rotation.from_matrix(R_a.T @ R_b).magnitude())


def procrustes_svd(a, b, w):
    """argmin_R sum_k w_k |R a_k - b_k|^2 over proper rotations, via SVD of the cross-covariance."""
    w = np.asarray(w, dtype=float)
    M = b.T @ (w[:, None] * a)  # sum w b a^T
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def procrustes_horn(a, b, w):
    """Same optimum by Horn's closed form: top eigenvector of a symmetric 4x4 matrix."""
    S = (np.asarray(w, dtype=float)[:, None] * a).T @ b
    (sxx, sxy, sxz), (syx, syy, syz), (szx, szy, szz) = S
    N = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    _, vecs = np.linalg.eigh(N)
    w_, x, y, z = vecs[:, -1]
    return Rotation.from_quat([x, y, z, w_]).as_matrix()


def brute_nn_residual(a, b):
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return float(np.mean(np.sqrt(d2.min(axis=1))))


def quat_wxyz(R):
    x, y, z, w = Rotation.from_matrix(R).as_quat()
    return np.array([w, x, y, z])


def matrix_wxyz(q):
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w]).as_matrix()

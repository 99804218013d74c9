"""Rotation estimation from geometry: ICP, weighted Procrustes, Umeyama."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from hocue.errors import (
    DegenerateGeometry,
    DegenerateJoints,
    DegenerateTrajectory,
    EmptyTrajectory,
    InsufficientPoints,
    NoCommonFrames,
)
from hocue.geometry import quat_from_matrix, quat_mul, quat_to_matrix, rotation_distance
from hocue.trajectory import Trajectory

log = logging.getLogger(__name__)

N_JOINTS = 21
BRUTE_FORCE_BELOW = 256


class PointCloud:
    """Masked object points for one frame, with cached centroid and spread."""

    def __init__(self, points, frame_index: int = 0):
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            pts = np.zeros((0, 3))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be N x 3, got shape {pts.shape}")
        self._points = pts
        self.frame_index = int(frame_index)
        self._update()

    def _update(self):
        if len(self._points):
            self.centroid = self._points.mean(axis=0)
            # RMS distance to the centroid
            self.sigma = float(np.sqrt(np.mean(np.sum((self._points - self.centroid) ** 2, axis=1))))
        else:
            self.centroid = np.full(3, np.nan)
            self.sigma = 0.0

    @property
    def points(self) -> np.ndarray:
        return self._points

    @points.setter
    def points(self, value):
        self._points = np.asarray(value, dtype=float).reshape(-1, 3)
        self._update()

    def __len__(self) -> int:
        return len(self._points)

    @property
    def n(self) -> int:
        return len(self._points)


@dataclass
class HandJoints:
    joints: np.ndarray
    anchor_index: int = 0
    valid: bool = True

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=float)
        if self.joints.shape != (N_JOINTS, 3):
            raise ValueError(f"hand joints must be {N_JOINTS} x 3, got shape {self.joints.shape}")
        if not 0 <= self.anchor_index < N_JOINTS:
            raise ValueError(f"anchor_index must be in [0, {N_JOINTS - 1}]")
        if not np.all(np.isfinite(self.joints)):
            self.valid = False

    @property
    def anchor(self) -> np.ndarray:
        return self.joints[self.anchor_index]


class JointWeights:
    """Nonnegative per-joint weights, renormalized to sum to one."""

    def __init__(self, w=None):
        w = np.full(N_JOINTS, 1.0) if w is None else np.asarray(w, dtype=float).reshape(-1)
        if w.shape != (N_JOINTS,):
            raise ValueError(f"expected {N_JOINTS} joint weights, got {w.shape[0]}")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ValueError("joint weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0.0:
            raise ValueError("joint weights sum to zero")
        self.w = w / total

    @classmethod
    def uniform(cls) -> "JointWeights":
        return cls()

    def __array__(self, dtype=None, copy=None):
        return self.w if dtype is None else self.w.astype(dtype)

    def __repr__(self):
        return f"JointWeights({np.array2string(self.w, precision=4)})"


@dataclass
class IcpConfig:
    max_iterations: int = 50
    convergence_tol: float = 1e-6
    max_points: int = 2048
    min_points: int = 30
    seed: int = 0

    def __post_init__(self):
        for name in ("max_iterations", "convergence_tol", "max_points", "min_points"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IcpConfig.{name} must be positive")


@dataclass
class IcpReport:
    iterations: int
    residual: float
    converged: bool
    degenerate: bool = False
    history: list[float] = field(default_factory=list)


def _kabsch(H: np.ndarray) -> np.ndarray:
    """Rotation ``R`` maximizing ``tr(R H)`` for ``H = sum a b^T``, i.e. ``R a ~ b``."""
    U, _, Vt = np.linalg.svd(H)
    V = Vt.T
    d = 1.0 if np.linalg.det(V @ U.T) >= 0.0 else -1.0
    return V @ np.diag([1.0, 1.0, d]) @ U.T


def _rank_below_two(centered: np.ndarray) -> bool:
    if len(centered) < 2:
        return True
    s = np.linalg.svd(centered, compute_uv=False)
    return s[0] == 0.0 or s[1] < 1e-9 * s[0]


class _NearestNeighbor:
    def __init__(self, points: np.ndarray):
        self.points = points
        self.tree = cKDTree(points) if len(points) >= BRUTE_FORCE_BELOW else None

    def query(self, x: np.ndarray):
        if self.tree is not None:
            return self.tree.query(x, k=1)
        d2 = ((x[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        idx = np.argmin(d2, axis=1)
        return np.sqrt(d2[np.arange(len(x)), idx]), idx


def _subsample(points: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    if len(points) <= cap:
        return points
    idx = np.sort(rng.choice(len(points), size=cap, replace=False))
    return points[idx]


def icp_rotation(source: PointCloud, target: PointCloud, cfg: IcpConfig | None = None):
    """Point-to-point ICP on centroid-centered clouds; rotation only.

    Returns ``(R, report)`` where ``R`` maps centered source points onto
    centered target points. ``report.history`` holds the mean squared
    residual at each assignment step and is non-increasing.
    """
    cfg = cfg or IcpConfig()
    if source.n < cfg.min_points:
        raise InsufficientPoints("source", source.n, cfg.min_points)
    if target.n < cfg.min_points:
        raise InsufficientPoints("target", target.n, cfg.min_points)

    rng = np.random.default_rng(cfg.seed)
    a = _subsample(source.points - source.centroid, cfg.max_points, rng)
    b = _subsample(target.points - target.centroid, cfg.max_points, rng)
    degenerate = _rank_below_two(a) or _rank_below_two(b)
    if degenerate:
        warnings.warn(
            f"ICP between frames {source.frame_index} and {target.frame_index}: "
            "cloud spans fewer than two dimensions, rotation is not observable",
            DegenerateGeometry,
            stacklevel=2,
        )

    nn = _NearestNeighbor(b)
    R = np.eye(3)
    history: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        dist, idx = nn.query(a @ R.T)
        history.append(float(np.mean(dist**2)))
        R_new = _kabsch(a.T @ b[idx])
        step = rotation_distance(R, R_new)
        R = R_new
        if step < cfg.convergence_tol:
            converged = True
            break
    dist, _ = nn.query(a @ R.T)
    history.append(float(np.mean(dist**2)))
    report = IcpReport(
        iterations=iterations,
        residual=float(np.mean(dist)),
        converged=converged,
        degenerate=degenerate,
        history=history,
    )
    return R, report


def weighted_procrustes(J_i: HandJoints, J_j: HandJoints, w: JointWeights | None = None) -> np.ndarray:
    """Rotation taking anchor-relative joints of frame ``i`` onto those of frame ``j``.

    Reflection-corrected: ``R = V diag(1, 1, d) U^T`` with ``d = sign(det(V U^T))``.
    """
    if not (J_i.valid and J_j.valid):
        raise DegenerateJoints("hand joints marked invalid")
    weights = np.asarray(w if w is not None else JointWeights.uniform(), dtype=float)
    a = J_i.joints - J_i.anchor
    b = J_j.joints - J_j.anchor
    H = (a * weights[:, None]).T @ b
    s = np.linalg.svd(H, compute_uv=False)
    if s[0] <= 0.0 or s[1] < 1e-12 * s[0]:
        raise DegenerateJoints(f"weighted joint covariance has rank < 2 (singular values {s})")
    return _kabsch(H)


@dataclass
class SimilarityTransform:
    """``x -> scale * R x + t``."""

    scale: float = 1.0
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=float) @ self.R.T + self.t

    def to_dict(self) -> dict:
        return {"scale": float(self.scale), "R": self.R.tolist(), "t": self.t.tolist()}


def _common_frames(predicted: Trajectory, reference: Trajectory) -> np.ndarray:
    common = np.intersect1d(predicted.frames, reference.frames)
    if len(common) == 0:
        raise NoCommonFrames("predicted and reference trajectories share no frames")
    return common


def umeyama_align(predicted: Trajectory, reference: Trajectory) -> SimilarityTransform:
    """Least-squares similarity mapping predicted translations onto the reference ones."""
    common = _common_frames(predicted, reference)
    x = predicted.select(common).translations
    y = reference.select(common).translations
    n = len(x)
    if n < 3:
        raise DegenerateTrajectory(f"need at least 3 frames for similarity alignment, got {n}")
    mx, my = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - mx, y - my
    cov = yc.T @ xc / n
    U, D, Vt = np.linalg.svd(cov)
    if D[0] <= 0.0 or D[1] < 1e-10 * D[0]:
        raise DegenerateTrajectory("translation cross-covariance has rank < 2 (collinear or static path)")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0.0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var_x = np.sum(xc**2) / n
    scale = float(np.trace(np.diag(D) @ S) / var_x)
    t = my - scale * R @ mx
    return SimilarityTransform(scale, R, t)


def apply_similarity(traj: Trajectory, sim: SimilarityTransform) -> Trajectory:
    """Map translations through ``sim``; rotations are left alone."""
    out = traj.copy()
    out.translations = sim.apply(traj.translations)
    return out


def first_frame_rotation_align(predicted: Trajectory, reference: Trajectory) -> Trajectory:
    """Left-multiply every predicted rotation so the first shared frame matches the reference."""
    if len(predicted) == 0 or len(reference) == 0:
        raise EmptyTrajectory("cannot align an empty trajectory")
    f0 = int(_common_frames(predicted, reference)[0])
    q_pred = predicted.rotations[predicted.index_of(f0)]
    q_ref = reference.rotations[reference.index_of(f0)]
    offset = quat_to_matrix(q_ref) @ quat_to_matrix(q_pred).T
    q_off = quat_from_matrix(offset)
    out = predicted.copy()
    out.rotations = np.array([quat_mul(q_off, q) for q in predicted.rotations]).reshape(-1, 4)
    out.rotations[predicted.index_of(f0)] = q_ref
    return out


@dataclass
class FrameObservation:
    """Everything known about one frame before tracking."""

    frame: int
    cloud: PointCloud
    hand: HandJoints | None = None
    hand_2d: np.ndarray | None = None
    intrinsics: dict | None = None

    @property
    def hand_valid(self) -> bool:
        return self.hand is not None and self.hand.valid

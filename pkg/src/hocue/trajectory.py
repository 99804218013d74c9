"""Trajectory container, pairwise composition, re-anchoring and smoothing."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from hocue.errors import AnchorOutOfRange, EmptyTrajectory, MissingFrame, MissingPair
from hocue.geometry import (
    Pose,
    canonical_quat,
    quat_angle,
    quat_average,
    quat_conj,
    quat_from_matrix,
    quat_identity,
    quat_mul,
    quat_to_matrix,
    slerp,
)

log = logging.getLogger(__name__)


class TrajFlag(enum.IntFlag):
    NONE = 0
    INTERPOLATED = 1
    ANCHORED = 2
    SMOOTHED = 4
    # relative rotation fell back to identity because neither cue was usable
    FALLBACK = 8


@dataclass
class Trajectory:
    """Poses indexed by strictly increasing frame numbers.

    ``rotations`` holds canonical ``(w, x, y, z)`` quaternions, one row per frame.
    """

    frames: np.ndarray
    rotations: np.ndarray
    translations: np.ndarray
    flags: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64).reshape(-1)
        n = len(self.frames)
        self.rotations = np.asarray(self.rotations, dtype=float).reshape(n, 4)
        self.translations = np.asarray(self.translations, dtype=float).reshape(n, 3)
        if self.flags is None:
            self.flags = np.zeros(n, dtype=np.int64)
        self.flags = np.asarray(self.flags, dtype=np.int64).reshape(n)
        if n > 1 and np.any(np.diff(self.frames) <= 0):
            raise ValueError("trajectory frame indices must be strictly increasing")
        self.rotations = np.array([canonical_quat(q) for q in self.rotations]).reshape(n, 4)

    @classmethod
    def from_poses(cls, frames: Sequence[int], poses: Sequence[Pose], flags=None) -> "Trajectory":
        return cls(
            np.asarray(frames),
            np.array([p.rotation for p in poses]).reshape(-1, 4),
            np.array([p.translation for p in poses]).reshape(-1, 3),
            flags,
        )

    @classmethod
    def from_matrices(cls, frames, rotations, translations, flags=None) -> "Trajectory":
        quats = np.array([quat_from_matrix(R) for R in rotations]).reshape(-1, 4)
        return cls(np.asarray(frames), quats, translations, flags)

    def __len__(self) -> int:
        return len(self.frames)

    def copy(self) -> "Trajectory":
        return Trajectory(self.frames.copy(), self.rotations.copy(), self.translations.copy(), self.flags.copy())

    def pose(self, k: int) -> Pose:
        return Pose(self.rotations[k], self.translations[k])

    def poses(self) -> list[Pose]:
        return [self.pose(k) for k in range(len(self))]

    def rotation_matrices(self) -> np.ndarray:
        return np.array([quat_to_matrix(q) for q in self.rotations]).reshape(-1, 3, 3)

    def index_of(self, frame: int) -> int:
        k = int(np.searchsorted(self.frames, frame))
        if k >= len(self.frames) or self.frames[k] != frame:
            raise MissingFrame(f"frame {frame} not in trajectory")
        return k

    def has_frame(self, frame: int) -> bool:
        k = int(np.searchsorted(self.frames, frame))
        return k < len(self.frames) and self.frames[k] == frame

    def select(self, frames) -> "Trajectory":
        idx = [self.index_of(int(f)) for f in frames]
        return Trajectory(self.frames[idx], self.rotations[idx], self.translations[idx], self.flags[idx])

    def relative_rotation(self, u: int, v: int) -> np.ndarray:
        """``R_v R_u^T``: maps frame ``u`` camera-space motion onto frame ``v``."""
        Ru = quat_to_matrix(self.rotations[self.index_of(u)])
        Rv = quat_to_matrix(self.rotations[self.index_of(v)])
        return Rv @ Ru.T


def compose(
    initial_pose: Pose,
    pairs: Sequence,
    translations: Sequence,
    frames: Sequence[int] | None = None,
    fallback_identity: bool = False,
) -> Trajectory:
    """Chain consecutive relative rotations into absolute poses.

    ``pairs[k]`` relates ``frames[k]`` to ``frames[k+1]``. Each entry is either a
    rotation matrix, ``None`` (no cue), or an object with ``R_fused`` and
    ``frame_pair`` attributes. ``translations[k]`` is a 3-vector or ``None``
    when invalid; invalid entries are filled by linear interpolation in the
    frame index and flagged ``INTERPOLATED``.
    """
    n = len(translations)
    if n == 0:
        raise EmptyTrajectory("no frames to compose")
    frames = np.arange(n) if frames is None else np.asarray(frames, dtype=np.int64)
    if len(pairs) != n - 1:
        raise ValueError(f"expected {n - 1} consecutive pairs, got {len(pairs)}")
    flags = np.zeros(n, dtype=np.int64)
    quats = np.empty((n, 4))
    quats[0] = initial_pose.rotation
    for k, pair in enumerate(pairs):
        R = getattr(pair, "R_fused", pair)
        if R is None:
            if not fallback_identity:
                raise MissingPair(f"no rotation cue for pair ({frames[k]}, {frames[k + 1]})")
            flags[k + 1] |= TrajFlag.FALLBACK
            quats[k + 1] = quats[k]
            continue
        expected = (int(frames[k]), int(frames[k + 1]))
        got = getattr(pair, "frame_pair", expected)
        if tuple(got) != expected:
            raise MissingPair(f"pair {tuple(got)} found where {expected} was expected")
        quats[k + 1] = quat_mul(quat_from_matrix(R), quats[k])

    trans = np.full((n, 3), np.nan)
    valid = np.zeros(n, dtype=bool)
    for k, t in enumerate(translations):
        if t is not None:
            t = np.asarray(t, dtype=float).reshape(3)
            if np.all(np.isfinite(t)):
                trans[k] = t
                valid[k] = True
    if not valid.any():
        raise EmptyTrajectory("no valid translation in any frame")
    if not valid.all():
        for d in range(3):
            trans[~valid, d] = np.interp(frames[~valid], frames[valid], trans[valid, d])
        flags[~valid] |= TrajFlag.INTERPOLATED
    return Trajectory(frames, quats, trans, flags)


@dataclass
class AnchorConfig:
    period: int = 30
    anchor_window: int = 5
    blend_span: int | None = None  # defaults to ``period``

    def __post_init__(self):
        if self.period < 2:
            raise ValueError("anchor period must be >= 2")
        if self.anchor_window < 1:
            raise ValueError("anchor_window must be >= 1")
        if self.blend_span is not None and self.blend_span < 1:
            raise ValueError("blend_span must be >= 1")

    @property
    def span(self) -> int:
        return self.period if self.blend_span is None else self.blend_span


def reanchor(traj: Trajectory, anchor_estimates: Mapping[int, np.ndarray], cfg: AnchorConfig,
             report: list | None = None) -> Trajectory:
    """Pull the trajectory onto anchor rotations, spreading each correction.

    Anchors are processed in frame order. At anchor frame ``a`` the correction
    ``C = R_anchor R_a^T`` is measured against the current (already corrected)
    estimate. Frames ``f`` in ``(a - span, a]`` become
    ``slerp(I, C, (f - a + span) / span) @ R_f``. Frames after ``a`` are
    re-composed from the anchor, ``R_f @ R_a^T @ R_anchor``, which keeps their
    estimated frame-to-frame motion unchanged. Frames before the first blend
    window are returned untouched. If ``report`` is a list, one
    ``{"frame", "correction_rad"}`` dict per anchor is appended to it.
    """
    out = traj.copy()
    span = cfg.span
    for a in sorted(anchor_estimates):
        if not out.has_frame(a):
            raise AnchorOutOfRange(f"anchor frame {a} is outside the trajectory")
        k_a = out.index_of(a)
        q_anchor = quat_from_matrix(anchor_estimates[a])
        q_corr = quat_mul(q_anchor, quat_conj(out.rotations[k_a]))
        angle = quat_angle(q_corr, quat_identity())
        if report is not None:
            report.append({"frame": int(a), "correction_rad": angle})
        if angle == 0.0:
            continue
        q_carry = quat_mul(quat_conj(out.rotations[k_a]), q_anchor)
        first = a - span
        for k in range(len(out)):
            f = int(out.frames[k])
            if f <= first:
                continue
            if f < a:
                step = slerp(quat_identity(), q_corr, (f - first) / span)
                out.rotations[k] = quat_mul(step, out.rotations[k])
                out.flags[k] |= TrajFlag.ANCHORED
            elif f > a:
                out.rotations[k] = quat_mul(out.rotations[k], q_carry)
        out.rotations[k_a] = q_anchor
        out.flags[k_a] |= TrajFlag.ANCHORED
    return out


def _check_window(w: int, name: str) -> int:
    if w < 1 or w % 2 == 0:
        raise ValueError(f"{name} must be odd and >= 1, got {w}")
    return w // 2


def smooth(traj: Trajectory, rot_window: int = 5, trans_window: int = 5) -> Trajectory:
    """Sliding chordal quaternion mean and centered moving average; truncated at the ends."""
    hr = _check_window(rot_window, "rot_window")
    ht = _check_window(trans_window, "trans_window")
    out = traj.copy()
    n = len(traj)
    if hr > 0:
        for k in range(n):
            lo, hi = max(0, k - hr), min(n, k + hr + 1)
            Q = traj.rotations[lo:hi].copy()
            center = traj.rotations[k]
            Q[Q @ center < 0.0] *= -1.0
            out.rotations[k] = quat_average(Q)
    if ht > 0:
        for k in range(n):
            lo, hi = max(0, k - ht), min(n, k + ht + 1)
            out.translations[k] = traj.translations[lo:hi].mean(axis=0)
    if hr > 0 or ht > 0:
        out.flags |= TrajFlag.SMOOTHED
    return out


def max_adjacent_rotation(traj: Trajectory) -> float:
    """Largest geodesic angle between consecutive rotations (radians)."""
    if len(traj) < 2:
        return 0.0
    return max(quat_angle(traj.rotations[k], traj.rotations[k + 1]) for k in range(len(traj) - 1))


def rotation_errors(a: Trajectory, b: Trajectory) -> np.ndarray:
    """Per-frame geodesic angle between two trajectories sharing frame indices."""
    if not np.array_equal(a.frames, b.frames):
        raise ValueError("trajectories must share frame indices")
    return np.array([quat_angle(p, q) for p, q in zip(a.rotations, b.rotations)])


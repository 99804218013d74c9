"""Synthetic hand-object sequences with ground truth.

The object is a box with one corner notched out (so no rotation maps it onto
itself) sampled on its surface. A hand skeleton in a fixed grasp layout moves
rigidly with the object from ``grasp_frame`` on and articulates on its own
before that. Occlusion removes the points on one side of a slowly turning
plane, which biases the visible centroid the way a gripping hand does.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from hocue.alignment import N_JOINTS, FrameObservation, HandJoints, PointCloud
from hocue.errors import ConfigError
from hocue.geometry import quat_from_matrix, rotation_exp
from hocue.io import write_frames, write_trajectory
from hocue.trajectory import Trajectory

BOX_EXTENT = np.array([1.0, 0.6, 0.4])
NOTCH_EXTENT = np.array([0.4, 0.3, 0.2])
CYLINDER_RADIUS = 0.3
CYLINDER_HEIGHT = 1.0
PHASES = np.array([0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0])


@dataclass
class SynthConfig:
    n_frames: int = 100
    n_points: int = 2000
    rot_rate_deg: float = 3.0
    rot_axis: list = field(default_factory=lambda: [0.3, 1.0, 0.2])
    # axis wobble amplitude; 0 keeps a fixed rotation axis
    rot_wobble: float = 0.6
    rot_period: float = 40.0
    trans_velocity: list = field(default_factory=lambda: [0.01, 0.0, 0.004])
    trans_wobble: float = 0.05
    trans_period: float = 50.0
    # float, per-frame list, or list of [start_frame, fraction] steps
    occlusion_schedule: object = 1.0
    occlusion_plane_rate_deg: float = 1.0
    point_noise_sigma: float = 0.0
    joint_noise_sigma: float = 0.0
    grasp_frame: int = 0
    shape: str = "notched_box"
    intrinsics: dict | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 2:
            raise ConfigError("n_frames must be >= 2")
        if self.n_points < 1:
            raise ConfigError("n_points must be >= 1")
        if self.point_noise_sigma < 0 or self.joint_noise_sigma < 0:
            raise ConfigError("noise sigmas must be nonnegative")
        if self.shape not in ("notched_box", "cylinder"):
            raise ConfigError(f"unknown shape {self.shape!r}")
        if np.linalg.norm(self.rot_axis) == 0:
            raise ConfigError("rot_axis must be nonzero")
        if self.rot_period <= 0 or self.trans_period <= 0:
            raise ConfigError("motion periods must be positive")
        fr = self.visible_fractions()
        if np.any(fr < 0.0) or np.any(fr > 1.0):
            raise ConfigError("visible fractions must lie in [0, 1]")

    def visible_fractions(self) -> np.ndarray:
        sched = self.occlusion_schedule
        n = self.n_frames
        if isinstance(sched, (int, float)):
            return np.full(n, float(sched))
        if not isinstance(sched, (list, tuple)) or not sched:
            raise ConfigError("occlusion_schedule must be a number or a non-empty list")
        if all(isinstance(s, (list, tuple)) for s in sched):
            out = np.full(n, 1.0)
            for start, value in sorted((int(s[0]), float(s[1])) for s in sched):
                out[max(start, 0):] = value
            return out
        if len(sched) != n:
            raise ConfigError(f"per-frame occlusion_schedule needs {n} entries, got {len(sched)}")
        return np.asarray(sched, dtype=float)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown synth config keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class SynthSequence:
    observations: list
    ground_truth: Trajectory
    meta: dict = field(default_factory=dict)


def _sample_box_surface(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples on the notched box surface, notch at the (+x, +y, +z) corner."""
    h = BOX_EXTENT / 2.0
    lo_notch = h - NOTCH_EXTENT
    faces = []  # (kind, axis, plane offset, area): six outer faces, three notch walls
    for ax in range(3):
        u, v = [k for k in range(3) if k != ax]
        area = BOX_EXTENT[u] * BOX_EXTENT[v]
        faces.append(("outer", ax, -h[ax], area))
        faces.append(("outer", ax, h[ax], area))
        faces.append(("notch", ax, lo_notch[ax], NOTCH_EXTENT[u] * NOTCH_EXTENT[v]))
    areas = np.array([f[3] for f in faces])
    out = []
    need = n
    while need > 0:
        m = 2 * need + 64
        which = rng.choice(len(faces), size=m, p=areas / areas.sum())
        pts = np.empty((m, 3))
        for k, (kind, ax, value, _) in enumerate(faces):
            sel = which == k
            cnt = int(sel.sum())
            if cnt == 0:
                continue
            if kind == "outer":
                p = rng.uniform(-h, h, size=(cnt, 3))
            else:
                p = rng.uniform(lo_notch, h, size=(cnt, 3))
            p[:, ax] = value
            pts[sel] = p
        in_notch = np.all(pts > lo_notch, axis=1)
        is_notch_wall = np.array([faces[k][0] == "notch" for k in which])
        keep = is_notch_wall | ~in_notch
        good = pts[keep]
        out.append(good[:need])
        need -= len(good[:need])
    return np.concatenate(out)


def _sample_cylinder_surface(n: int, rng: np.random.Generator) -> np.ndarray:
    r, hgt = CYLINDER_RADIUS, CYLINDER_HEIGHT
    side, cap = 2 * math.pi * r * hgt, math.pi * r * r
    which = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
    theta = rng.uniform(0, 2 * math.pi, size=n)
    rad = np.where(which == 0, r, r * np.sqrt(rng.uniform(0, 1, size=n)))
    z = np.where(which == 0, rng.uniform(-hgt / 2, hgt / 2, size=n), np.where(which == 1, hgt / 2, -hgt / 2))
    # cylinder axis along x to match the box's long side
    return np.stack([z, rad * np.cos(theta), rad * np.sin(theta)], axis=1)


def canonical_hand() -> np.ndarray:
    """21 joints (wrist, then thumb..pinky, base to tip) gripping the object from -y."""
    J = np.zeros((N_JOINTS, 3))
    J[0] = [0.0, -0.75, -0.05]
    thumb_base = np.array([-0.3, -0.5, -0.12])
    for j in range(4):
        J[1 + j] = thumb_base + j * np.array([0.06, 0.08, -0.06])
    for f, x in enumerate([-0.15, 0.0, 0.12, 0.24]):
        base = np.array([x, -0.45, 0.05])
        for j in range(4):
            J[5 + 4 * f + j] = base + j * np.array([0.0, 0.09, 0.1]) + (j == 3) * np.array([0.0, 0.05, 0.0])
    return J


def _articulate(J: np.ndarray, amount: float) -> np.ndarray:
    """Curl/extend fingers about their bases by scaling segment offsets."""
    out = J.copy()
    for f in range(5):
        base = J[1 + 4 * f]
        for j in range(1, 4):
            k = 1 + 4 * f + j
            off = J[k] - base
            out[k] = base + off * (1.0 + amount) + amount * np.array([0.0, -0.05 * j, 0.04 * j])
    return out


def ground_truth_motion(cfg: SynthConfig):
    """Absolute rotations (N, 3, 3) and translations (N, 3); frame 0 is the identity."""
    n = cfg.n_frames
    axis = np.asarray(cfg.rot_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    rate = math.radians(cfg.rot_rate_deg)
    Rs = np.empty((n, 3, 3))
    Rs[0] = np.eye(3)
    for i in range(n - 1):
        a = axis + cfg.rot_wobble * np.sin(2 * math.pi * i / cfg.rot_period + PHASES)
        na = np.linalg.norm(a)
        a = axis if na == 0 else a / na
        Rs[i + 1] = rotation_exp(rate * a) @ Rs[i]
    idx = np.arange(n)[:, None]
    wob = np.sin(2 * math.pi * idx / cfg.trans_period + PHASES[None, :]) - np.sin(PHASES)[None, :]
    ts = idx * np.asarray(cfg.trans_velocity, dtype=float)[None, :] + cfg.trans_wobble * wob
    return Rs, ts


def generate(cfg: SynthConfig) -> SynthSequence:
    rng = np.random.default_rng(cfg.seed)
    if cfg.shape == "notched_box":
        shape = _sample_box_surface(cfg.n_points, rng)
    else:
        shape = _sample_cylinder_surface(cfg.n_points, rng)
    shape = shape - shape.mean(axis=0)

    Rs, ts = ground_truth_motion(cfg)
    fractions = cfg.visible_fractions()
    hand_can = canonical_hand()
    normal0 = np.array([1.0, 0.3, 0.2]) / np.linalg.norm([1.0, 0.3, 0.2])
    plane_rate = math.radians(cfg.occlusion_plane_rate_deg)
    g = cfg.grasp_frame
    wobble_axis = np.array([0.2, -0.5, 1.0]) / np.linalg.norm([0.2, -0.5, 1.0])

    observations = []
    for i in range(cfg.n_frames):
        R, t = Rs[i], ts[i]
        pts = shape @ R.T + t
        n_vis = int(round(fractions[i] * len(pts)))
        if n_vis < len(pts):
            normal = rotation_exp(np.array([0.0, 0.0, plane_rate * i])) @ normal0
            score = (pts - t) @ normal
            keep = np.sort(np.argsort(score, kind="stable")[:n_vis])
            pts = pts[keep]
        if cfg.point_noise_sigma > 0 and len(pts):
            pts = pts + rng.normal(scale=cfg.point_noise_sigma, size=pts.shape)

        if i >= g:
            J = hand_can @ R.T + t
        else:
            lag = (g - i) / max(g, 1)
            H = rotation_exp(0.6 * lag * math.sin(0.15 * i) * wobble_axis)
            J_local = _articulate(hand_can, 0.35 * lag * math.sin(0.4 * i))
            wrist = hand_can[0]
            J_local = (J_local - wrist) @ H.T + wrist + np.array([0.0, -0.4, 0.1]) * lag
            J = J_local @ R.T + t
        if cfg.joint_noise_sigma > 0:
            J = J + rng.normal(scale=cfg.joint_noise_sigma, size=J.shape)
        observations.append(
            FrameObservation(i, PointCloud(pts, i), HandJoints(J), None, cfg.intrinsics)
        )

    gt = Trajectory(
        np.arange(cfg.n_frames),
        np.array([quat_from_matrix(R) for R in Rs]),
        ts,
    )
    meta = {
        "schema_version": 1,
        "config": asdict(cfg),
        "visible_fraction": fractions.tolist(),
        "symmetric_shape": cfg.shape != "notched_box",
        "grasp_frame": g,
    }
    return SynthSequence(observations, gt, meta)


def write_sequence(seq: SynthSequence, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "frames": out / "frames.jsonl",
        "ground_truth": out / "gt.csv",
        "meta": out / "meta.json",
    }
    write_frames(paths["frames"], seq.observations)
    write_trajectory(paths["ground_truth"], seq.ground_truth, comments=["synthetic ground truth"])
    paths["meta"].write_text(json.dumps(seq.meta, indent=2, sort_keys=True) + "\n")
    return paths


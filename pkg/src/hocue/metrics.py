"""Trajectory accuracy metrics: RRE, RTE, ARE, ATE and temporal correlation.

Relative motion between consecutive frames is ``dR_i = R_i^T R_{i+1}`` and
``dt_i = t_{i+1} - t_i``. Angles are reported in degrees.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from hocue.alignment import (
    SimilarityTransform,
    apply_similarity,
    first_frame_rotation_align,
    umeyama_align,
)
from hocue.errors import DegenerateTrajectory, NoCommonFrames, TooFewFrames
from hocue.geometry import quat_to_matrix, rotation_log
from hocue.trajectory import Trajectory

log = logging.getLogger(__name__)

AXES = ("x", "y", "z")


def _trace_angle(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Geodesic angle of ``A^T B`` for stacks of rotations.

    Evaluated as ``atan2(|axial(M)|, (tr(M) - 1) / 2)``, which equals
    ``arccos((tr(M) - 1) / 2)`` but keeps full precision near zero, where the
    arccos form loses about half the significant digits.
    """
    M = np.einsum("nji,njk->nik", A, B)
    axial = 0.5 * np.stack(
        [M[:, 2, 1] - M[:, 1, 2], M[:, 0, 2] - M[:, 2, 0], M[:, 1, 0] - M[:, 0, 1]], axis=1
    )
    cos = np.clip((np.trace(M, axis1=1, axis2=2) - 1.0) / 2.0, -1.0, 1.0)
    return np.arctan2(np.linalg.norm(axial, axis=1), cos)


def _shared(predicted: Trajectory, reference: Trajectory):
    common = np.intersect1d(predicted.frames, reference.frames)
    if len(common) == 0:
        raise NoCommonFrames("no frames in common")
    return predicted.select(common), reference.select(common)


def _deltas(traj: Trajectory):
    Rs = traj.rotation_matrices()
    dR = np.einsum("nji,njk->nik", Rs[:-1], Rs[1:])
    dt = np.diff(traj.translations, axis=0)
    return dR, dt


def relative_errors(predicted: Trajectory, reference: Trajectory) -> tuple[float, float]:
    """``(rre_deg, rte)`` averaged over consecutive shared frames."""
    pred, ref = _shared(predicted, reference)
    if len(pred) < 2:
        raise TooFewFrames(f"relative errors need >= 2 frames, got {len(pred)}")
    dR_p, dt_p = _deltas(pred)
    dR_r, dt_r = _deltas(ref)
    rre = float(np.mean(_trace_angle(dR_r, dR_p)))
    rte = float(np.mean(np.linalg.norm(dt_r - dt_p, axis=1)))
    return math.degrees(rre), rte


def per_frame_absolute(predicted: Trajectory, reference: Trajectory):
    pred, ref = _shared(predicted, reference)
    rot = np.degrees(_trace_angle(ref.rotation_matrices(), pred.rotation_matrices()))
    trans = np.linalg.norm(ref.translations - pred.translations, axis=1)
    return pred.frames, rot, trans


def absolute_errors(predicted: Trajectory, reference: Trajectory) -> tuple[float, float]:
    """``(are_deg, ate)``; ATE is an RMSE, ARE a mean angle. Inputs should already be aligned."""
    pred, ref = _shared(predicted, reference)
    if len(pred) < 1:
        raise TooFewFrames("absolute errors need at least one frame")
    _, rot, trans = per_frame_absolute(pred, ref)
    return float(np.mean(rot)), float(np.sqrt(np.mean(trans**2)))


def _pearson(x: np.ndarray, y: np.ndarray, eps: float) -> float | None:
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.mean(xc**2)), np.sqrt(np.mean(yc**2))
    if sx <= eps or sy <= eps:
        return None
    return float(np.clip(np.mean(xc * yc) / (sx * sy), -1.0, 1.0))


@dataclass
class TccResult:
    tcc_r: float
    tcc_t: float
    rot_axes: dict
    trans_axes: dict
    undefined_axes: list = field(default_factory=list)


def _axis_correlations(pred: np.ndarray, ref: np.ndarray, label: str, undefined: list) -> tuple[float, dict]:
    scale = max(1.0, float(np.max(np.abs(ref))) if ref.size else 1.0, float(np.max(np.abs(pred))) if pred.size else 1.0)
    eps = 1e-12 * scale
    per_axis = {}
    for d, name in enumerate(AXES):
        r = _pearson(pred[:, d], ref[:, d], eps)
        if r is None:
            undefined.append(f"{label}.{name}")
            r = 0.0
        per_axis[name] = r
    return float(np.mean(list(per_axis.values()))), per_axis


def tcc(predicted: Trajectory, reference: Trajectory) -> TccResult:
    """Per-axis Pearson correlation of motion deltas, averaged over x, y, z.

    Axes with (numerically) zero variance on either side count as 0 and are
    listed in ``undefined_axes``.
    """
    pred, ref = _shared(predicted, reference)
    if len(pred) < 3:
        raise TooFewFrames(f"TCC needs >= 3 frames, got {len(pred)}")
    dR_p, dt_p = _deltas(pred)
    dR_r, dt_r = _deltas(ref)
    w_p = np.array([rotation_log(R) for R in dR_p])
    w_r = np.array([rotation_log(R) for R in dR_r])
    undefined: list[str] = []
    tcc_r, rot_axes = _axis_correlations(w_p, w_r, "rot", undefined)
    tcc_t, trans_axes = _axis_correlations(dt_p, dt_r, "trans", undefined)
    return TccResult(tcc_r, tcc_t, rot_axes, trans_axes, undefined)


@dataclass
class EvalOptions:
    umeyama: bool = True
    first_frame_align: bool = True


@dataclass
class MetricsReport:
    rre_deg: float
    rte: float
    are_deg: float
    ate: float
    tcc_r: float
    tcc_t: float
    tcc_rot_axes: dict
    tcc_trans_axes: dict
    tcc_undefined_axes: list
    n_frames: int
    alignment: dict
    per_frame: dict = field(default_factory=dict)

    def to_dict(self, include_per_frame: bool = True) -> dict:
        d = asdict(self)
        if not include_per_frame:
            d.pop("per_frame")
        d["schema_version"] = 1
        return d

    def table(self) -> str:
        rows = [
            ("RRE (deg)", self.rre_deg),
            ("RTE", self.rte),
            ("ARE (deg)", self.are_deg),
            ("ATE", self.ate),
            ("TCC_R", self.tcc_r),
            ("TCC_T", self.tcc_t),
        ]
        lines = [f"{'metric':<10} {'value':>14}", "-" * 25]
        lines += [f"{name:<10} {value:>14.6g}" for name, value in rows]
        lines.append(f"{'frames':<10} {self.n_frames:>14d}")
        if self.tcc_undefined_axes:
            lines.append("undefined TCC axes: " + ", ".join(self.tcc_undefined_axes))
        return "\n".join(lines)


def align_for_evaluation(predicted: Trajectory, reference: Trajectory, options: EvalOptions | None = None):
    """First-frame rotation alignment then Umeyama on translations; returns ``(aligned, reference, metadata)``."""
    options = options or EvalOptions()
    pred, ref = _shared(predicted, reference)
    meta: dict = {"first_frame_align": options.first_frame_align, "umeyama": options.umeyama}
    if options.first_frame_align:
        aligned = first_frame_rotation_align(pred, ref)
        offset = quat_to_matrix(aligned.rotations[0]) @ quat_to_matrix(pred.rotations[0]).T
        meta["rotation_offset"] = offset.tolist()
        pred = aligned
    if options.umeyama:
        try:
            sim = umeyama_align(pred, ref)
        except DegenerateTrajectory as exc:
            log.warning("Umeyama alignment skipped: %s", exc)
            meta["umeyama_skipped"] = str(exc)
            sim = SimilarityTransform()
        meta["similarity"] = sim.to_dict()
        pred = apply_similarity(pred, sim)
    return pred, ref, meta


def evaluate(predicted: Trajectory, reference: Trajectory, options: EvalOptions | None = None) -> MetricsReport:
    pred, ref, meta = align_for_evaluation(predicted, reference, options)
    n = len(pred)
    if n >= 2:
        rre, rte = relative_errors(pred, ref)
    else:
        rre, rte = 0.0, 0.0
    are, ate = absolute_errors(pred, ref)
    if n >= 3:
        t = tcc(pred, ref)
    else:
        t = TccResult(0.0, 0.0, {}, {}, ["rot", "trans"])
    frames, rot_err, trans_err = per_frame_absolute(pred, ref)
    per_frame = {
        "frame": frames.tolist(),
        "rot_err_deg": rot_err.tolist(),
        "trans_err": trans_err.tolist(),
    }
    if n >= 2:
        dR_p, dt_p = _deltas(pred)
        dR_r, dt_r = _deltas(ref)
        per_frame["rel_rot_err_deg"] = [None] + np.degrees(_trace_angle(dR_r, dR_p)).tolist()
        per_frame["rel_trans_err"] = [None] + np.linalg.norm(dt_r - dt_p, axis=1).tolist()
    return MetricsReport(
        rre_deg=rre,
        rte=rte,
        are_deg=are,
        ate=ate,
        tcc_r=t.tcc_r,
        tcc_t=t.tcc_t,
        tcc_rot_axes=t.rot_axes,
        tcc_trans_axes=t.trans_axes,
        tcc_undefined_axes=t.undefined_axes,
        n_frames=n,
        alignment=meta,
        per_frame=per_frame,
    )

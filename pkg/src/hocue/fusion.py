"""Blending object and hand rotation cues; per-frame translation with a residual.

The blending coefficient ``alpha``, joint weights and translation residuals
come from a provider: either the deterministic visibility heuristic here or a
JSON Lines sidecar written by an external predictor.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from hocue.alignment import N_JOINTS, FrameObservation, JointWeights, PointCloud
from hocue.errors import EmptyCloud, NoCueAvailable, RangeError, SchemaError
from hocue.geometry import quat_from_matrix, quat_to_matrix, slerp

log = logging.getLogger(__name__)

DELTA_HARD_CAP = 2.0  # in units of the cloud's sigma
ALPHA_SLACK = 1e-6
VISIBILITY_PERCENTILE = 95.0


@dataclass
class PairEstimate:
    frame_pair: tuple[int, int]
    R_fused: np.ndarray | None
    alpha_effective: float
    R_obj: np.ndarray | None = None
    R_hand: np.ndarray | None = None
    object_available: bool = False
    hand_available: bool = False
    alpha_requested: float | None = None
    icp_residual: float | None = None
    icp_iterations: int | None = None
    notes: list[str] = field(default_factory=list)


def fuse_rotation(R_obj, R_hand, alpha: float):
    """Slerp from the object rotation (alpha=0) to the hand rotation (alpha=1).

    Returns ``(R_fused, alpha_effective)``. With a single cue present that cue
    is returned unchanged and ``alpha_effective`` records which one was used.
    """
    if R_obj is None and R_hand is None:
        raise NoCueAvailable("neither object nor hand rotation is available")
    if R_hand is None:
        return np.asarray(R_obj, dtype=float), 0.0
    if R_obj is None:
        return np.asarray(R_hand, dtype=float), 1.0
    alpha = float(np.clip(alpha, 0.0, 1.0))
    if alpha == 0.0:
        return np.asarray(R_obj, dtype=float), 0.0
    if alpha == 1.0:
        return np.asarray(R_hand, dtype=float), 1.0
    q = slerp(quat_from_matrix(R_obj), quat_from_matrix(R_hand), alpha)
    return quat_to_matrix(q), alpha


def clamp_delta(delta, sigma: float, cap: float = DELTA_HARD_CAP):
    """Limit ``|delta|`` to ``cap * sigma``, keeping its direction. Returns ``(delta, clamped)``."""
    delta = np.asarray(delta, dtype=float).reshape(3)
    limit = cap * max(float(sigma), 0.0)
    norm = float(np.linalg.norm(delta))
    if norm <= limit:
        return delta, False
    if limit == 0.0:
        return np.zeros(3), True
    return delta * (limit / norm), True


def fused_translation(cloud: PointCloud, delta=None, events: list | None = None) -> np.ndarray:
    """Visible-point centroid plus the (capped) residual offset."""
    if cloud.n == 0:
        raise EmptyCloud(f"frame {cloud.frame_index} has no object points")
    if delta is None:
        return cloud.centroid.copy()
    d, clamped = clamp_delta(delta, cloud.sigma)
    if clamped:
        log.warning(
            "frame %d: residual |delta|=%.4g exceeds %.1f sigma (sigma=%.4g), clamped",
            cloud.frame_index, np.linalg.norm(delta), DELTA_HARD_CAP, cloud.sigma,
        )
        if events is not None:
            events.append({
                "event": "delta_clamped",
                "frame": cloud.frame_index,
                "norm": float(np.linalg.norm(delta)),
                "limit": DELTA_HARD_CAP * cloud.sigma,
            })
    return cloud.centroid + d


def heuristic_alpha(k_i: int, k_j: int, k_ref: float) -> float:
    """``1 - min(1, min(K_i, K_j) / K_ref)``: lean on the hand as the object disappears."""
    if k_ref <= 0:
        return 1.0
    return 1.0 - min(1.0, min(k_i, k_j) / k_ref)


@dataclass
class CueProviderOutput:
    """Blending coefficients and joint weights per frame pair, residuals per frame.

    Pairs or frames not present fall back to the visibility heuristic (uniform
    weights, zero residual); each such lookup is recorded in ``fallbacks``.
    """

    alpha: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    delta: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    k_ref: float = 0.0
    source: str = "heuristic"
    fallbacks: set = field(default_factory=set)

    def pair(self, i: int, j: int) -> tuple[float, JointWeights]:
        key = (int(i), int(j))
        if key in self.alpha:
            a = self.alpha[key]
        else:
            a = heuristic_alpha(self.counts.get(i, 0), self.counts.get(j, 0), self.k_ref)
            if self.source != "heuristic":
                self.fallbacks.add(key)
        w = self.weights.get(key)
        if w is None:
            w = JointWeights.uniform()
        return a, w

    def residual(self, frame: int) -> np.ndarray:
        d = self.delta.get(int(frame))
        return np.zeros(3) if d is None else d


def _visibility_reference(counts: Sequence[int]) -> float:
    return float(np.percentile(np.asarray(counts, dtype=float), VISIBILITY_PERCENTILE)) if len(counts) else 0.0


def heuristic_provider(observations: Sequence[FrameObservation], cfg=None) -> CueProviderOutput:
    """Visibility-driven alpha for consecutive pairs; uniform weights; zero residuals.

    ``cfg`` is accepted for interface symmetry and currently unused.
    """
    if len(observations) == 0:
        raise ValueError("heuristic_provider needs at least one observation")
    obs = sorted(observations, key=lambda o: o.frame)
    counts = {o.frame: o.cloud.n for o in obs}
    k_ref = _visibility_reference(list(counts.values()))
    out = CueProviderOutput(counts=counts, k_ref=k_ref, source="heuristic")
    for a, b in zip(obs[:-1], obs[1:]):
        out.alpha[(a.frame, b.frame)] = heuristic_alpha(counts[a.frame], counts[b.frame], k_ref)
        out.weights[(a.frame, b.frame)] = JointWeights.uniform()
    for o in obs:
        out.delta[o.frame] = np.zeros(3)
    return out


def _number_list(value, length: int, path, line: int, name: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != length:
        raise SchemaError(f"expected a list of {length} numbers", path=path, line=line, field=name)
    try:
        arr = np.array([float(v) for v in value])
    except (TypeError, ValueError):
        raise SchemaError("non-numeric entry", path=path, line=line, field=name) from None
    if not np.all(np.isfinite(arr)):
        raise SchemaError("non-finite entry", path=path, line=line, field=name)
    return arr


def _int_field(rec: dict, name: str, path, line: int) -> int:
    v = rec.get(name)
    if not isinstance(v, int) or isinstance(v, bool):
        raise SchemaError("expected an integer", path=path, line=line, field=name)
    return v


def file_provider(path, observations: Sequence[FrameObservation] | None = None) -> CueProviderOutput:
    """Load predictor outputs from a JSON Lines sidecar.

    Pair records: ``{"i": int, "j": int, "alpha": float, "weights": [21 floats]}``.
    Frame records: ``{"frame": int, "delta": [3 floats]}``. Unknown fields are
    ignored. When ``observations`` are given, consecutive pairs absent from
    the file are filled from the heuristic and listed in ``fallbacks``.
    """
    path = Path(path)
    base = heuristic_provider(observations) if observations else CueProviderOutput()
    out = CueProviderOutput(counts=base.counts, k_ref=base.k_ref, source=f"file:{path}")
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                rec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", path=path, line=lineno) from None
            if not isinstance(rec, dict):
                raise SchemaError("record must be a JSON object", path=path, line=lineno)
            version = rec.get("schema_version", 1)
            if version != 1:
                raise SchemaError(f"unsupported schema_version {version!r}", path=path, line=lineno)
            if "i" in rec or "j" in rec:
                i = _int_field(rec, "i", path, lineno)
                j = _int_field(rec, "j", path, lineno)
                alpha = rec.get("alpha")
                if not isinstance(alpha, (int, float)) or isinstance(alpha, bool) or not np.isfinite(alpha):
                    raise SchemaError("expected a number", path=path, line=lineno, field="alpha")
                if alpha < -ALPHA_SLACK or alpha > 1.0 + ALPHA_SLACK:
                    raise RangeError(f"alpha={alpha} outside [0, 1]", path=path, line=lineno, field="alpha")
                w = _number_list(rec.get("weights"), N_JOINTS, path, lineno, "weights")
                try:
                    weights = JointWeights(w)
                except ValueError as exc:
                    raise SchemaError(str(exc), path=path, line=lineno, field="weights") from None
                out.alpha[(i, j)] = float(np.clip(alpha, 0.0, 1.0))
                out.weights[(i, j)] = weights
            elif "frame" in rec:
                frame = _int_field(rec, "frame", path, lineno)
                out.delta[frame] = _number_list(rec.get("delta"), 3, path, lineno, "delta")
            else:
                raise SchemaError("record has neither pair keys (i, j) nor 'frame'", path=path, line=lineno)
    for key in base.alpha:
        if key not in out.alpha:
            out.alpha[key] = base.alpha[key]
            out.weights[key] = base.weights[key]
            out.fallbacks.add(key)
    if out.fallbacks:
        log.info("%d pairs missing from %s, using heuristic values", len(out.fallbacks), path)
    return out


def write_sidecar(path, provider: CueProviderOutput) -> None:
    """Write a provider's values in the sidecar format (pairs first, then frames)."""
    with open(path, "w") as fh:
        for (i, j) in sorted(provider.alpha):
            w = provider.weights.get((i, j)) or JointWeights.uniform()
            rec = {"i": i, "j": j, "alpha": provider.alpha[(i, j)], "weights": np.asarray(w).tolist()}
            fh.write(json.dumps(rec) + "\n")
        for frame in sorted(provider.delta):
            fh.write(json.dumps({"frame": frame, "delta": np.asarray(provider.delta[frame]).tolist()}) + "\n")

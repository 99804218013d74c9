"""End-to-end tracking: per-pair cue estimation, fusion, composition, anchoring."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hocue.alignment import FrameObservation, HandJoints, icp_rotation, weighted_procrustes
from hocue.config import RunConfig
from hocue.errors import DegenerateJoints, EmptyCloud, InsufficientPoints, NoCueAvailable
from hocue.fusion import CueProviderOutput, PairEstimate, file_provider, fuse_rotation, fused_translation, heuristic_provider
from hocue.geometry import Pose, quat_average, quat_from_matrix, quat_to_matrix
from hocue.trajectory import AnchorConfig, Trajectory, compose, reanchor, smooth

log = logging.getLogger(__name__)


@dataclass
class TrackResult:
    trajectory: Trajectory
    pairs: list[PairEstimate]
    frames: list[dict]
    events: list[dict] = field(default_factory=list)
    anchors: dict = field(default_factory=dict)

    def log_records(self) -> list[dict]:
        """Run log lines: one per pair, one per frame, then events, sorted by key."""
        recs = []
        for p in self.pairs:
            recs.append({
                "type": "pair",
                "i": p.frame_pair[0],
                "j": p.frame_pair[1],
                "object_available": p.object_available,
                "hand_available": p.hand_available,
                "alpha_requested": p.alpha_requested,
                "alpha_effective": p.alpha_effective if p.R_fused is not None else None,
                "icp_residual": p.icp_residual,
                "icp_iterations": p.icp_iterations,
                "notes": p.notes,
            })
        recs.extend({"type": "frame", **f} for f in self.frames)
        for frame in sorted(self.anchors):
            recs.append({"type": "anchor", "frame": frame, "rotation": self.anchors[frame].tolist()})
        recs.extend({"type": "event", **e} for e in self.events)
        return recs


def _hand(obs: FrameObservation, anchor_joint: int) -> HandJoints | None:
    if not obs.hand_valid:
        return None
    if obs.hand.anchor_index == anchor_joint:
        return obs.hand
    return HandJoints(obs.hand.joints, anchor_joint, obs.hand.valid)


def estimate_pair(obs_i: FrameObservation, obs_j: FrameObservation, provider: CueProviderOutput,
                  cfg: RunConfig) -> PairEstimate:
    """Object and hand rotation cues for one frame pair, fused by the provider's alpha."""
    key = (obs_i.frame, obs_j.frame)
    alpha, weights = provider.pair(*key)
    est = PairEstimate(key, None, alpha, alpha_requested=alpha)
    if cfg.cues in ("both", "object"):
        try:
            R_obj, report = icp_rotation(obs_i.cloud, obs_j.cloud, cfg.icp)
            est.icp_residual = report.residual
            est.icp_iterations = report.iterations
            if report.degenerate:
                est.notes.append("object cue degenerate geometry")
            else:
                est.R_obj = R_obj
                est.object_available = True
                if not report.converged:
                    est.notes.append("icp did not converge")
        except InsufficientPoints as exc:
            est.notes.append(f"object cue unavailable: {exc}")
    if cfg.cues in ("both", "hand"):
        h_i, h_j = _hand(obs_i, cfg.anchor_joint), _hand(obs_j, cfg.anchor_joint)
        if h_i is None or h_j is None:
            est.notes.append("hand cue unavailable: missing or invalid joints")
        else:
            try:
                est.R_hand = weighted_procrustes(h_i, h_j, weights)
                est.hand_available = True
            except DegenerateJoints as exc:
                est.notes.append(f"hand cue unavailable: {exc}")
    try:
        est.R_fused, est.alpha_effective = fuse_rotation(est.R_obj, est.R_hand, alpha)
    except NoCueAvailable:
        est.notes.append("no cue available")
    return est


def _map_pairs(jobs, provider, cfg: RunConfig) -> dict:
    def run(pair):
        return estimate_pair(pair[0], pair[1], provider, cfg)

    if cfg.workers <= 1 or len(jobs) <= 1:
        results = [run(p) for p in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, jobs))
    return {r.frame_pair: r for r in results}


def make_provider(observations: Sequence[FrameObservation], cfg: RunConfig) -> CueProviderOutput:
    if cfg.provider == "heuristic":
        return heuristic_provider(observations)
    return file_provider(cfg.provider[len("file:"):], observations)


def anchor_estimates(observations: Sequence[FrameObservation], traj: Trajectory, provider: CueProviderOutput,
                     cfg: RunConfig) -> dict:
    """Wider-window anchor rotations at every multiple of the anchor period.

    For anchor frame ``f`` each earlier frame ``f - m`` (``2 <= m <= anchor_window``)
    gives a candidate ``R_(f-m, f) @ R_(f-m)`` from a direct fused estimate over
    the wide pair; the anchor is the chordal mean of the candidates.
    """
    by_frame = {o.frame: o for o in observations}
    settings = cfg.anchor
    jobs, owners = [], []
    for f in traj.frames[1:]:
        f = int(f)
        if f % settings.period != 0:
            continue
        for m in range(2, settings.anchor_window + 1):
            if f - m in by_frame and traj.has_frame(f - m):
                jobs.append((by_frame[f - m], by_frame[f]))
                owners.append(f)
    results = _map_pairs(jobs, provider, cfg)
    candidates: dict[int, list] = {}
    for (src, dst), f in zip(jobs, owners):
        est = results[(src.frame, dst.frame)]
        if est.R_fused is None:
            continue
        R_prev = quat_to_matrix(traj.rotations[traj.index_of(src.frame)])
        candidates.setdefault(f, []).append(quat_from_matrix(est.R_fused @ R_prev))
    return {f: quat_to_matrix(quat_average(qs)) for f, qs in candidates.items()}


def track(observations: Sequence[FrameObservation], cfg: RunConfig | None = None,
          provider: CueProviderOutput | None = None, initial_pose: Pose | None = None) -> TrackResult:
    cfg = cfg or RunConfig()
    obs = sorted(observations, key=lambda o: o.frame)
    if not obs:
        raise ValueError("no observations to track")
    provider = provider or make_provider(obs, cfg)
    events: list[dict] = []

    pair_map = _map_pairs(list(zip(obs[:-1], obs[1:])), provider, cfg)
    pairs = [pair_map[(a.frame, b.frame)] for a, b in zip(obs[:-1], obs[1:])]
    for key in sorted(provider.fallbacks):
        events.append({"event": "provider_fallback", "i": key[0], "j": key[1]})

    translations, frame_recs = [], []
    for o in obs:
        delta = provider.residual(o.frame)
        try:
            t = fused_translation(o.cloud, delta, events)
        except EmptyCloud:
            t = None
            events.append({"event": "translation_invalid", "frame": o.frame})
        translations.append(t)
        frame_recs.append({
            "frame": o.frame,
            "n_points": o.cloud.n,
            "sigma": o.cloud.sigma,
            "delta": np.asarray(delta, dtype=float).tolist(),
            "translation_valid": t is not None,
        })

    for p in pairs:
        if p.R_fused is None:
            events.append({"event": "no_cue", "i": p.frame_pair[0], "j": p.frame_pair[1],
                           "action": "identity" if cfg.gap_policy == "identity" else "fail"})
    traj = compose(
        initial_pose or Pose(),
        pairs,
        translations,
        frames=[o.frame for o in obs],
        fallback_identity=cfg.gap_policy == "identity",
    )

    anchors = {}
    if cfg.anchor.enabled:
        anchors = anchor_estimates(obs, traj, provider, cfg)
        acfg = AnchorConfig(cfg.anchor.period, cfg.anchor.anchor_window, cfg.anchor.blend_span)
        traj = reanchor(traj, anchors, acfg)
    if cfg.smoothing.enabled:
        traj = smooth(traj, cfg.smoothing.rot_window, cfg.smoothing.trans_window)
    return TrackResult(traj, pairs, frame_recs, events, anchors)

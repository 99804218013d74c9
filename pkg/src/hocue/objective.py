"""Window-level consistency and smoothness scores for a predicted trajectory.

Relative rotations follow the tracking convention ``R_uv = R_v R_u^T``, under
which an exactly composed trajectory satisfies ``R_ac = R_bc R_ab``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from hocue.errors import BehindCamera, MissingFrame
from hocue.geometry import rotation_angle, rotation_log
from hocue.trajectory import Trajectory

SOFT_BOUND = 0.5  # residual allowed before penalty, in units of sigma
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class WindowSample:
    a: int
    b: int
    c: int

    def __post_init__(self):
        if not self.a < self.b < self.c:
            raise ValueError(f"window indices must satisfy a < b < c, got {(self.a, self.b, self.c)}")

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return ((self.a, self.b), (self.b, self.c), (self.a, self.c))

    @property
    def frames(self) -> tuple[int, int, int]:
        return (self.a, self.b, self.c)


@dataclass
class LossWeights:
    trans: float = 10.0
    cons: float = 1.0
    smooth: float = 1.0
    bound: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be nonnegative")


@dataclass
class Intrinsics:
    fx: float
    fy: float
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    def project(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if t[2] <= MIN_DEPTH:
            raise BehindCamera(f"translation {t.tolist()} has depth {t[2]:.3g} <= {MIN_DEPTH}")
        return np.array([self.fx * t[0] / t[2] + self.cx, self.fy * t[1] / t[2] + self.cy])


def _require(traj: Trajectory, window: WindowSample):
    for f in window.frames:
        if not traj.has_frame(f):
            raise MissingFrame(f"frame {f} of window {window.frames} missing from trajectory")


def relative_rotation(source, u: int, v: int) -> np.ndarray:
    """``R_uv`` from a trajectory (``R_v R_u^T``) or from a ``{(u, v): R_uv}`` mapping of pair estimates."""
    if isinstance(source, Trajectory):
        return source.relative_rotation(u, v)
    try:
        return np.asarray(source[(u, v)], dtype=float)
    except KeyError:
        raise MissingFrame(f"no relative rotation for pair {(u, v)}") from None


def loss_rot(window: WindowSample, predicted, reference) -> float:
    """Mean geodesic angle between predicted and reference relative rotations over the window pairs.

    Either side may be a :class:`Trajectory` or a mapping of pairwise estimates.
    """
    errs = [
        rotation_angle(relative_rotation(reference, u, v).T @ relative_rotation(predicted, u, v))
        for u, v in window.pairs
    ]
    return float(np.mean(errs))


def loss_trans(window: WindowSample, predicted: Trajectory, reference: Trajectory, intr: Intrinsics | None = None):
    """Mean L1 translation distance over the three window frames.

    Returns ``(value, space)``: pixels (``"image"``) when intrinsics are given,
    scene units (``"3d"``) otherwise.
    """
    _require(predicted, window)
    _require(reference, window)
    dists = []
    for f in window.frames:
        tp = predicted.translations[predicted.index_of(f)]
        tr = reference.translations[reference.index_of(f)]
        if intr is not None:
            tp, tr = intr.project(tp), intr.project(tr)
        dists.append(float(np.sum(np.abs(tp - tr))))
    return float(np.mean(dists)), ("image" if intr is not None else "3d")


def loss_cons(R_ab, R_bc, R_ac) -> float:
    """Angle by which ``R_ac`` disagrees with the chained ``R_bc R_ab``."""
    M = (np.asarray(R_bc) @ np.asarray(R_ab)).T @ np.asarray(R_ac)
    return float(np.linalg.norm(rotation_log(M)))


def loss_smooth(t_a, t_b, t_c, a: int, b: int, c: int) -> float:
    if not a < b < c:
        raise ValueError("loss_smooth needs a < b < c")
    t_a, t_b, t_c = (np.asarray(t, dtype=float) for t in (t_a, t_b, t_c))
    return float(np.linalg.norm((t_c - t_b) / (c - b) - (t_b - t_a) / (b - a)))


def loss_bound(delta, sigma: float) -> float:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    excess = max(0.0, float(np.linalg.norm(delta)) - SOFT_BOUND * sigma)
    return excess * excess


@dataclass
class ObjectiveBreakdown:
    rot: float = 0.0
    trans: float = 0.0
    cons: float = 0.0
    smooth: float = 0.0
    bound: float = 0.0
    trans_space: str = "3d"
    total: float = 0.0
    window: tuple | None = None
    weights: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def combine_terms(rot: float, trans: float, cons: float, smooth: float, bound: float,
                  weights: LossWeights | None = None) -> float:
    w = weights or LossWeights()
    return rot + w.trans * trans + w.cons * cons + w.smooth * smooth + w.bound * bound


def total_objective(
    window: WindowSample,
    predicted: Trajectory,
    reference: Trajectory,
    weights: LossWeights | None = None,
    intrinsics: Intrinsics | None = None,
    residuals: dict | None = None,
    sigmas: dict | None = None,
    predicted_pairs: dict | None = None,
) -> ObjectiveBreakdown:
    """Weighted sum of all terms on one window, with the per-term breakdown.

    Rotation and consistency terms use ``predicted_pairs`` (direct pairwise
    estimates keyed by ``(u, v)``) when given, otherwise the relative
    rotations of the predicted trajectory, for which consistency holds by
    construction. The bound term averages over window frames that have both a
    residual and a cloud spread in ``residuals`` / ``sigmas``; it is zero when
    none do.
    """
    weights = weights or LossWeights()
    rot_source = predicted if predicted_pairs is None else predicted_pairs
    rot = loss_rot(window, rot_source, reference)
    trans, space = loss_trans(window, predicted, reference, intrinsics)
    a, b, c = window.frames
    cons = loss_cons(*(relative_rotation(rot_source, u, v) for u, v in window.pairs))
    ta, tb, tc = (predicted.translations[predicted.index_of(f)] for f in window.frames)
    smooth = loss_smooth(ta, tb, tc, a, b, c)
    bounds = [
        loss_bound(residuals[f], sigmas[f])
        for f in window.frames
        if residuals is not None and sigmas is not None and f in residuals and f in sigmas
    ]
    bound = float(np.mean(bounds)) if bounds else 0.0
    total = combine_terms(rot, trans, cons, smooth, bound, weights)
    return ObjectiveBreakdown(rot, trans, cons, smooth, bound, space, total, window.frames, asdict(weights))


def parse_windows(selection: str, frames) -> list[WindowSample]:
    """Window selection syntax used by the CLI.

    ``consecutive``            every ``(f, f+1, f+2)`` run of listed frames
    ``gaps:G1,G2[:STRIDE]``    ``(f, f+G1, f+G1+G2)`` for every STRIDE-th start frame
    ``random:N[:MAXGAP[:SEED]]`` N windows with gaps drawn from ``1..MAXGAP``
    ``a,b,c;a,b,c``            explicit windows
    """
    frames = [int(f) for f in frames]
    present = set(frames)
    selection = selection.strip()
    out: list[WindowSample] = []
    if selection == "consecutive":
        for k in range(len(frames) - 2):
            out.append(WindowSample(frames[k], frames[k + 1], frames[k + 2]))
    elif selection.startswith("gaps:"):
        parts = selection[5:].split(":")
        g1, g2 = (int(x) for x in parts[0].split(","))
        stride = int(parts[1]) if len(parts) > 1 else 1
        if g1 < 1 or g2 < 1 or stride < 1:
            raise ValueError(f"bad window selection {selection!r}")
        for f in frames[::stride]:
            if f + g1 in present and f + g1 + g2 in present:
                out.append(WindowSample(f, f + g1, f + g1 + g2))
    elif selection.startswith("random:"):
        parts = selection[7:].split(":")
        count = int(parts[0])
        max_gap = int(parts[1]) if len(parts) > 1 else 5
        seed = int(parts[2]) if len(parts) > 2 else 0
        rng = np.random.default_rng(seed)
        if len(frames) < 3:
            return out
        for _ in range(count):
            ka = int(rng.integers(0, len(frames) - 2))
            kb = min(ka + int(rng.integers(1, max_gap + 1)), len(frames) - 2)
            kc = min(kb + int(rng.integers(1, max_gap + 1)), len(frames) - 1)
            out.append(WindowSample(frames[ka], frames[kb], frames[kc]))
    else:
        for chunk in selection.split(";"):
            if chunk.strip():
                a, b, c = (int(x) for x in chunk.split(","))
                out.append(WindowSample(a, b, c))
    return out


def score_windows(windows, predicted: Trajectory, reference: Trajectory, weights: LossWeights | None = None,
                  intrinsics: Intrinsics | None = None, residuals=None, sigmas=None) -> dict:
    """Per-window breakdowns plus the mean of each term."""
    rows = [
        total_objective(w, predicted, reference, weights, intrinsics, residuals, sigmas).to_dict()
        for w in windows
    ]
    keys = ("rot", "trans", "cons", "smooth", "bound", "total")
    means = {k: (float(np.mean([r[k] for r in rows])) if rows else None) for k in keys}
    return {
        "schema_version": 1,
        "n_windows": len(rows),
        "weights": asdict(weights or LossWeights()),
        "trans_space": "image" if intrinsics is not None else "3d",
        "mean": means,
        "windows": rows,
    }

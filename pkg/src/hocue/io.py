"""File formats: frame records (JSONL), trajectories (CSV / JSONL), run logs."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from hocue.alignment import N_JOINTS, FrameObservation, HandJoints, PointCloud
from hocue.errors import SchemaError
from hocue.trajectory import Trajectory

SCHEMA_VERSION = 1
TRAJ_COLUMNS = ["frame", "qw", "qx", "qy", "qz", "tx", "ty", "tz", "flags"]


def _fmt(x) -> str:
    return repr(float(x))


def _check_version(rec: dict, path, line: int):
    version = rec.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}", path=path, line=line, field="schema_version")


def _matrix(value, cols: int, path, line: int, name: str, rows: int | None = None) -> np.ndarray:
    if not isinstance(value, list):
        raise SchemaError("expected a list of rows", path=path, line=line, field=name)
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("rows must be equal-length numeric lists", path=path, line=line, field=name) from None
    if arr.size == 0 and rows is None:
        return np.zeros((0, cols))
    if arr.ndim != 2 or arr.shape[1] != cols:
        raise SchemaError(f"expected rows of {cols} numbers, got shape {arr.shape}", path=path, line=line, field=name)
    if rows is not None and arr.shape[0] != rows:
        raise SchemaError(f"expected exactly {rows} rows, got {arr.shape[0]}", path=path, line=line, field=name)
    if not np.all(np.isfinite(arr)):
        raise SchemaError("non-finite value", path=path, line=line, field=name)
    return arr


def parse_frame_record(rec: dict, path=None, line: int = 0) -> FrameObservation:
    if not isinstance(rec, dict):
        raise SchemaError("record must be a JSON object", path=path, line=line)
    _check_version(rec, path, line)
    frame = rec.get("frame")
    if not isinstance(frame, int) or isinstance(frame, bool):
        raise SchemaError("expected an integer", path=path, line=line, field="frame")
    points = _matrix(rec.get("object_points", []), 3, path, line, "object_points")
    hand = None
    if rec.get("hand_joints_3d") is not None:
        hand = HandJoints(_matrix(rec["hand_joints_3d"], 3, path, line, "hand_joints_3d", rows=N_JOINTS))
    hand_2d = None
    if rec.get("hand_joints_2d") is not None:
        hand_2d = _matrix(rec["hand_joints_2d"], 2, path, line, "hand_joints_2d", rows=N_JOINTS)
    intr = rec.get("intrinsics")
    if intr is not None:
        if not isinstance(intr, dict) or not all(isinstance(intr.get(k), (int, float)) for k in ("fx", "fy", "cx", "cy")):
            raise SchemaError("expected {fx, fy, cx, cy} numbers", path=path, line=line, field="intrinsics")
        intr = {k: float(intr[k]) for k in ("fx", "fy", "cx", "cy")}
    return FrameObservation(frame, PointCloud(points, frame), hand, hand_2d, intr)


def read_frames(path) -> list[FrameObservation]:
    """Read frame records, sorted by frame index. Unknown fields are ignored."""
    path = Path(path)
    out: list[FrameObservation] = []
    seen: dict[int, int] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                rec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", path=path, line=lineno) from None
            obs = parse_frame_record(rec, path, lineno)
            if obs.frame in seen:
                raise SchemaError(
                    f"frame {obs.frame} duplicates line {seen[obs.frame]}", path=path, line=lineno, field="frame"
                )
            seen[obs.frame] = lineno
            out.append(obs)
    if not out:
        raise SchemaError("no frame records", path=path)
    out.sort(key=lambda o: o.frame)
    return out


def frame_record(obs: FrameObservation) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "frame": int(obs.frame),
        "object_points": obs.cloud.points.tolist(),
        "hand_joints_3d": obs.hand.joints.tolist() if obs.hand is not None and obs.hand.valid else None,
        "hand_joints_2d": obs.hand_2d.tolist() if obs.hand_2d is not None else None,
        "intrinsics": obs.intrinsics,
    }


def write_frames(path, observations: Iterable[FrameObservation]) -> None:
    with open(path, "w") as fh:
        for obs in observations:
            fh.write(json.dumps(frame_record(obs)) + "\n")


def _trajectory_rows(traj: Trajectory):
    for k in range(len(traj)):
        q, t = traj.rotations[k], traj.translations[k]
        yield [str(int(traj.frames[k])), *map(_fmt, q), *map(_fmt, t), hex(int(traj.flags[k]))]


def write_trajectory(path, traj: Trajectory, comments: Sequence[str] = ()) -> None:
    """CSV unless ``path`` ends in ``.jsonl``; comment lines go in a ``#`` header."""
    path = Path(path)
    if path.suffix == ".jsonl":
        with open(path, "w") as fh:
            fh.write(json.dumps({"schema_version": SCHEMA_VERSION, "comments": list(comments)}) + "\n")
            for row in _trajectory_rows(traj):
                rec = {"frame": int(row[0])}
                rec.update({c: float(v) for c, v in zip(TRAJ_COLUMNS[1:8], row[1:8])})
                rec["flags"] = row[8]
                fh.write(json.dumps(rec) + "\n")
        return
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_COLUMNS)
        w.writerows(_trajectory_rows(traj))


def _parse_flags(value, path, line) -> int:
    try:
        return int(str(value), 16) if str(value).lower().startswith("0x") else int(value)
    except ValueError:
        raise SchemaError(f"bad flags value {value!r}", path=path, line=line, field="flags") from None


def _trajectory_from_rows(rows, path) -> Trajectory:
    if not rows:
        raise SchemaError("trajectory has no rows", path=path)
    frames, quats, trans, flags = [], [], [], []
    for line, rec in rows:
        try:
            frames.append(int(rec["frame"]))
            quats.append([float(rec[c]) for c in ("qw", "qx", "qy", "qz")])
            trans.append([float(rec[c]) for c in ("tx", "ty", "tz")])
        except KeyError as exc:
            raise SchemaError("missing column", path=path, line=line, field=exc.args[0]) from None
        except (TypeError, ValueError):
            raise SchemaError("non-numeric value", path=path, line=line) from None
        flags.append(_parse_flags(rec.get("flags", 0), path, line))
    if np.any(~np.isfinite(quats)) or np.any(~np.isfinite(trans)):
        raise SchemaError("non-finite pose value", path=path)
    order = np.argsort(frames, kind="stable")
    frames = np.asarray(frames)[order]
    if np.any(np.diff(frames) <= 0):
        raise SchemaError("duplicate frame index", path=path, field="frame")
    try:
        return Trajectory(frames, np.asarray(quats)[order], np.asarray(trans)[order], np.asarray(flags)[order])
    except ValueError as exc:
        raise SchemaError(str(exc), path=path) from None


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    rows = []
    if path.suffix == ".jsonl":
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
                _check_version(rec, path, lineno)
                if "frame" in rec:
                    rows.append((lineno, rec))
        return _trajectory_from_rows(rows, path)
    with open(path, newline="") as fh:
        lines = [(n, l) for n, l in enumerate(fh, start=1)]
    body = []
    for n, l in lines:
        if l.startswith("#"):
            text = l[1:].strip()
            if text.startswith("schema_version="):
                try:
                    version = int(text.split("=", 1)[1])
                except ValueError:
                    raise SchemaError("bad schema_version", path=path, line=n) from None
                if version != SCHEMA_VERSION:
                    raise SchemaError(f"unsupported schema_version {version}", path=path, line=n)
            continue
        if l.strip():
            body.append((n, l))
    if not body:
        raise SchemaError("empty trajectory file", path=path)
    reader = csv.DictReader([l for _, l in body])
    missing = [c for c in TRAJ_COLUMNS[:8] if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"header missing columns {missing}", path=path, line=body[0][0])
    for (n, _), rec in zip(body[1:], reader):
        rows.append((n, rec))
    return _trajectory_from_rows(rows, path)


def read_trajectory_comments(path) -> list[str]:
    path = Path(path)
    if path.suffix == ".jsonl":
        with open(path) as fh:
            first = json.loads(fh.readline() or "{}")
        return list(first.get("comments", []))
    out = []
    with open(path) as fh:
        for l in fh:
            if not l.startswith("#"):
                break
            out.append(l[1:].strip())
    return out


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    path = Path(path)
    out = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.strip():
                try:
                    out.append(json.loads(raw))
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"invalid JSON ({exc.msg})", path=path, line=lineno) from None
    return out

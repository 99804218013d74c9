"""Command-line entry point.

Every failure prints exactly one line ``hocue: error[<kind>]: <message>`` to
stderr. Exit codes: 1 generic, 2 bad input files / config / usage, 3 tracking
could not produce a complete trajectory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from hocue import __version__
from hocue.config import RunConfig, config_from_dict, load_config
from hocue.errors import (
    ConfigError,
    EmptyTrajectory,
    HocueError,
    MissingPair,
    SchemaError,
)
from hocue.geometry import Pose, quat_angle
from hocue.io import read_frames, read_jsonl, read_trajectory, write_jsonl, write_trajectory
from hocue.metrics import EvalOptions, evaluate
from hocue.objective import Intrinsics, parse_windows, score_windows
from hocue.retarget import RetargetConfig, retarget
from hocue.synth import SynthConfig, generate, write_sequence
from hocue.tracking import track

log = logging.getLogger("hocue")

EXIT_ERROR = 1
EXIT_INPUT = 2
EXIT_TRACKING = 3
LOG_ENV = "HOCUE_LOG_LEVEL"


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _read_json(path, what: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError("io", f"{what} not found: {path}", EXIT_INPUT) from None
    except json.JSONDecodeError as exc:
        raise CliError("schema", f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})", EXIT_INPUT) from None
    if not isinstance(data, dict):
        raise CliError("schema", f"{path}: expected a JSON object", EXIT_INPUT)
    return data


def pose_from_json(d, where: str) -> Pose:
    """Accepts ``{"matrix": 4x4}`` or ``{"rotation": [w,x,y,z], "translation": [x,y,z]}``."""
    if not isinstance(d, dict):
        raise SchemaError("expected a pose object", field=where)
    try:
        if "matrix" in d:
            return Pose.from_matrix(np.asarray(d["matrix"], dtype=float).reshape(4, 4))
        return Pose(np.asarray(d.get("rotation", [1, 0, 0, 0]), dtype=float),
                    np.asarray(d.get("translation", [0, 0, 0]), dtype=float))
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"invalid pose: {exc}", field=where) from None


def pose_to_json(p: Pose) -> dict:
    return {"rotation": p.rotation.tolist(), "translation": p.translation.tolist()}


def load_retarget_config(path) -> RetargetConfig:
    d = _read_json(path, "retarget config")
    allowed = {"schema_version", "T_base_cam", "T_eef_obj", "rate_hz"}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown retarget config key(s): {', '.join(unknown)}")
    if d.get("schema_version", 1) != 1:
        raise ConfigError(f"{path}: unsupported schema_version {d['schema_version']!r}")
    try:
        return RetargetConfig(
            pose_from_json(d.get("T_base_cam", {}), "T_base_cam"),
            pose_from_json(d.get("T_eef_obj", {}), "T_eef_obj"),
            float(d.get("rate_hz", 30.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _default_run_log(out: Path) -> Path:
    return out.with_name(out.stem + ".run.jsonl")


def cmd_track(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = cfg.to_dict()
    if args.provider:
        overrides["provider"] = args.provider
    if args.jobs is not None:
        overrides["parallelism"] = args.jobs
    if args.seed is not None:
        overrides["icp"]["seed"] = args.seed
        overrides["seed"] = args.seed
    if args.cues:
        overrides["cues"] = args.cues
    cfg = config_from_dict(overrides)

    observations = read_frames(args.input)
    initial = Pose()
    if args.initial_pose:
        initial = pose_from_json(_read_json(args.initial_pose, "initial pose"), "initial_pose")
    try:
        result = track(observations, cfg, initial_pose=initial)
    except (MissingPair, EmptyTrajectory) as exc:
        raise CliError(exc.kind, str(exc), EXIT_TRACKING) from None

    out = Path(args.out or cfg.output.trajectory or Path(args.input).with_name("trajectory.csv"))
    run_log = Path(args.run_log or cfg.output.run_log or _default_run_log(out))
    write_trajectory(out, result.trajectory, comments=[f"hocue {__version__} track {Path(args.input).name}"])
    header = {"type": "run", "schema_version": 1, "input": str(args.input), "config": cfg.to_dict(),
              "n_frames": len(result.trajectory)}
    header["config"].pop("parallelism", None)
    write_jsonl(run_log, [header] + result.log_records())
    n_fallback = sum(p.R_fused is None for p in result.pairs)
    log.info("wrote %s (%d frames, %d pairs without cue) and %s", out, len(result.trajectory), n_fallback, run_log)
    return 0


def cmd_eval(args) -> int:
    pred = read_trajectory(args.pred)
    ref = read_trajectory(args.ref)
    options = EvalOptions(umeyama=not args.no_umeyama, first_frame_align=not args.no_first_frame_align)
    report = evaluate(pred, ref, options)
    data = report.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(data, indent=2) + "\n")
    if args.per_frame_csv:
        pf = report.per_frame
        cols = [c for c in ("frame", "rot_err_deg", "trans_err", "rel_rot_err_deg", "rel_trans_err") if c in pf]
        with open(args.per_frame_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in zip(*(pf[c] for c in cols)):
                w.writerow(["" if v is None else v for v in row])
    if args.json:
        print(json.dumps(report.to_dict(include_per_frame=False), indent=2))
    else:
        print(report.table())
    return 0


def _run_log_residuals(path):
    residuals, sigmas = {}, {}
    for rec in read_jsonl(path):
        if rec.get("type") == "frame":
            residuals[int(rec["frame"])] = np.asarray(rec["delta"], dtype=float)
            sigmas[int(rec["frame"])] = float(rec["sigma"])
    return residuals, sigmas


def cmd_validate(args) -> int:
    pred = read_trajectory(args.pred)
    ref = read_trajectory(args.ref)
    cfg = load_config(args.config) if args.config else RunConfig()
    intr = None
    if args.intrinsics:
        d = _read_json(args.intrinsics, "intrinsics")
        try:
            intr = Intrinsics(float(d["fx"]), float(d["fy"]), float(d.get("cx", 0.0)), float(d.get("cy", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"invalid intrinsics: {exc}", path=args.intrinsics) from None
    residuals = sigmas = None
    if args.run_log:
        residuals, sigmas = _run_log_residuals(args.run_log)
    common = np.intersect1d(pred.frames, ref.frames)
    try:
        windows = parse_windows(args.windows, common)
    except ValueError as exc:
        raise CliError("usage", f"bad --windows value {args.windows!r}: {exc}", EXIT_INPUT) from None
    report = score_windows(windows, pred, ref, cfg.loss_weights, intr, residuals, sigmas)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        means = report["mean"]
        print(f"{report['n_windows']} windows; mean total {means['total']}")
    else:
        print(text)
    return 0


def cmd_retarget(args) -> int:
    traj = read_trajectory(args.traj)
    cfg = load_retarget_config(args.config)
    out_traj = retarget(traj, cfg)
    out = Path(args.out or Path(args.traj).with_name(Path(args.traj).stem + ".eef.csv"))
    comments = [
        "retargeted end-effector targets",
        "T_base_cam=" + json.dumps(pose_to_json(cfg.base_from_cam)),
        "T_eef_obj=" + json.dumps(pose_to_json(cfg.eef_from_obj)),
        f"rate_hz={cfg.rate_hz}",
    ]
    write_trajectory(out, out_traj, comments=comments)
    log.info("wrote %s", out)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_dict(_read_json(args.config, "synth config")) if args.config else SynthConfig()
    paths = write_sequence(generate(cfg), args.out)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def _series_from_report(data: dict):
    pf = data.get("per_frame")
    if not pf:
        raise SchemaError("report has no per_frame section")
    cols = [c for c in ("frame", "rot_err_deg", "trans_err", "rel_rot_err_deg", "rel_trans_err") if c in pf]
    return cols, list(zip(*(pf[c] for c in cols)))


def _series_from_trajectory(path):
    traj = read_trajectory(path)
    q0 = traj.rotations[0]
    rows = [
        (int(f), math.degrees(quat_angle(q0, q)), *t.tolist(), hex(int(fl)))
        for f, q, t, fl in zip(traj.frames, traj.rotations, traj.translations, traj.flags)
    ]
    return ["frame", "angle_from_first_deg", "tx", "ty", "tz", "flags"], rows


def _series_from_run_log(records):
    cols = ["i", "j", "alpha_requested", "alpha_effective", "object_available", "hand_available", "icp_residual"]
    rows = [tuple(r.get(c) for c in cols) for r in records if r.get("type") == "pair"]
    return cols, rows


def cmd_plot_data(args) -> int:
    path = Path(args.input)
    if path.suffix == ".json":
        cols, rows = _series_from_report(_read_json(path, "report"))
    elif path.suffix == ".jsonl":
        records = read_jsonl(path)
        if records and records[0].get("type") == "run":
            cols, rows = _series_from_run_log(records)
        else:
            cols, rows = _series_from_trajectory(path)
    else:
        cols, rows = _series_from_trajectory(path)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow(["" if v is None else v for v in row])
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hocue", description="Hand-object cue fusion tracking toolkit")
    p.add_argument("--version", action="version", version=f"hocue {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("track", help="track an object through frame records")
    t.add_argument("input", help="frame records (JSONL)")
    t.add_argument("--config", help="run config JSON")
    t.add_argument("--provider", help="'heuristic' or 'file:PATH' (predictor sidecar JSONL)")
    t.add_argument("--initial-pose", help="JSON pose for the first frame (default identity)")
    t.add_argument("--cues", choices=["both", "object", "hand"])
    t.add_argument("--out", help="trajectory output (.csv or .jsonl)")
    t.add_argument("--run-log", help="run log output (JSONL)")
    t.add_argument("--jobs", type=int, help="worker threads for pair estimation")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score a trajectory against a reference")
    e.add_argument("pred")
    e.add_argument("ref")
    e.add_argument("--no-umeyama", action="store_true")
    e.add_argument("--no-first-frame-align", action="store_true")
    e.add_argument("--out", help="write the JSON report here")
    e.add_argument("--per-frame-csv", help="write per-frame errors here")
    e.add_argument("--json", action="store_true", help="print JSON instead of a table")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("validate", help="window consistency / smoothness scores")
    v.add_argument("pred")
    v.add_argument("ref")
    v.add_argument("--windows", required=True,
                   help="'consecutive', 'gaps:G1,G2[:STRIDE]', 'random:N[:MAXGAP[:SEED]]' or 'a,b,c;...'")
    v.add_argument("--intrinsics", help="JSON {fx, fy, cx, cy}; scores translations in pixels")
    v.add_argument("--run-log", help="track run log, supplies residuals for the bound term")
    v.add_argument("--config", help="run config JSON (loss weights)")
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("retarget", help="object trajectory to end-effector targets")
    r.add_argument("traj")
    r.add_argument("--config", required=True, help="JSON with T_base_cam, T_eef_obj, rate_hz")
    r.add_argument("--out")
    r.set_defaults(func=cmd_retarget)

    s = sub.add_parser("synth", help="generate a synthetic sequence")
    s.add_argument("--config", help="synth config JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("plot-data", help="emit CSV series from a report, trajectory or run log")
    d.add_argument("input")
    d.add_argument("--out")
    d.set_defaults(func=cmd_plot_data)
    return p


class _ArgumentParserExit(Exception):
    pass


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        code, kind, msg = exc.code, exc.kind, str(exc)
    except (SchemaError, ConfigError) as exc:
        code, kind, msg = EXIT_INPUT, exc.kind, str(exc)
    except FileNotFoundError as exc:
        code, kind, msg = EXIT_INPUT, "io", f"{exc.strerror}: {exc.filename}"
    except HocueError as exc:
        code, kind, msg = EXIT_ERROR, exc.kind, str(exc)
    except ValueError as exc:
        code, kind, msg = EXIT_INPUT, "value", str(exc)
    msg = " ".join(msg.split())
    print(f"hocue: error[{kind}]: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

import json

import numpy as np
import pytest

from hocue.alignment import FrameObservation, HandJoints, PointCloud
from hocue.cli import main
from hocue.config import RunConfig, config_from_dict, load_config
from hocue.errors import ConfigError, SchemaError
from hocue.io import read_frames, read_jsonl, read_trajectory, read_trajectory_comments, write_frames, write_trajectory
from hocue.synth import SynthConfig, generate, write_sequence
from hocue.trajectory import TrajFlag

from conftest import random_walk_trajectory


# file formats


@pytest.mark.parametrize("suffix", [".csv", ".jsonl"])
def test_trajectory_round_trip_is_exact(tmp_path, rng, suffix):
    t = random_walk_trajectory(rng, n=20, frames=np.arange(5, 45, 2))
    t.flags[3] = TrajFlag.INTERPOLATED | TrajFlag.SMOOTHED
    path = tmp_path / f"t{suffix}"
    write_trajectory(path, t, comments=["hello"])
    back = read_trajectory(path)
    np.testing.assert_array_equal(back.frames, t.frames)
    np.testing.assert_array_equal(back.rotations, t.rotations)
    np.testing.assert_array_equal(back.translations, t.translations)
    np.testing.assert_array_equal(back.flags, t.flags)
    assert "hello" in read_trajectory_comments(path)


def test_csv_header_and_hex_flags(tmp_path, rng):
    t = random_walk_trajectory(rng, n=3)
    t.flags[1] = 5
    write_trajectory(tmp_path / "t.csv", t)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "# schema_version=1"
    assert lines[1] == "frame,qw,qx,qy,qz,tx,ty,tz,flags"
    assert lines[3].endswith(",0x5")


def test_frames_round_trip(tmp_path, rng):
    obs = [
        FrameObservation(0, PointCloud(rng.normal(size=(5, 3))), HandJoints(rng.normal(size=(21, 3))),
                         rng.normal(size=(21, 2)), {"fx": 1.0, "fy": 1.0, "cx": 0.0, "cy": 0.0}),
        FrameObservation(3, PointCloud(np.zeros((0, 3)))),
    ]
    write_frames(tmp_path / "f.jsonl", obs)
    back = read_frames(tmp_path / "f.jsonl")
    assert [o.frame for o in back] == [0, 3]
    np.testing.assert_array_equal(back[0].cloud.points, obs[0].cloud.points)
    np.testing.assert_array_equal(back[0].hand.joints, obs[0].hand.joints)
    assert back[1].cloud.n == 0 and back[1].hand is None


@pytest.mark.parametrize(
    "records, field, line",
    [
        ([{"frame": 0, "object_points": [[0, 0, 0]]}, {"frame": 0, "object_points": []}], "frame", 2),
        ([{"frame": 0, "object_points": [[0, 0]]}], "object_points", 1),
        ([{"frame": 0, "object_points": [], "hand_joints_3d": [[0, 0, 0]] * 20}], "hand_joints_3d", 1),
        ([{"frame": "a", "object_points": []}], "frame", 1),
        ([{"frame": 1, "schema_version": 2}], "schema_version", 1),
    ],
)
def test_frame_schema_errors(tmp_path, records, field, line):
    path = tmp_path / "f.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    with pytest.raises(SchemaError) as exc:
        read_frames(path)
    assert exc.value.field == field
    assert exc.value.line == line


def test_trajectory_schema_errors(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("frame,qw,qx,qy,qz,tx,ty\n0,1,0,0,0,0,0\n")
    with pytest.raises(SchemaError):
        read_trajectory(p)
    p.write_text("# schema_version=9\nframe,qw,qx,qy,qz,tx,ty,tz,flags\n0,1,0,0,0,0,0,0,0x0\n")
    with pytest.raises(SchemaError):
        read_trajectory(p)
    p.write_text("frame,qw,qx,qy,qz,tx,ty,tz,flags\n0,1,0,0,0,0,0,0,0x0\n0,1,0,0,0,0,0,0,0x0\n")
    with pytest.raises(SchemaError):
        read_trajectory(p)


# run config


def test_config_defaults_and_overrides():
    cfg = config_from_dict({"icp": {"max_iterations": 10}, "anchor": {"enabled": True, "period": 20}})
    assert cfg.icp.max_iterations == 10 and cfg.anchor.period == 20
    assert cfg.loss_weights.trans == 10.0
    assert config_from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "data, needle",
    [
        ({"icp": {"max_iters": 3}}, "icp.max_iters"),
        ({"bogus": 1}, "bogus"),
        ({"cues": "eyes"}, "cues"),
        ({"smoothing": {"rot_window": 4}}, "odd"),
        ({"provider": "magic"}, "provider"),
        ({"icp": {"min_points": 0}}, "min_points"),
    ],
)
def test_config_rejects_bad_values(data, needle):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert needle in str(exc.value)


def test_load_config_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_config(p)


# CLI


@pytest.fixture(scope="module")
def seq_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("seq")
    write_sequence(generate(SynthConfig(n_frames=40, n_points=600)), out)
    return out


def _diag(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return err[0]


def test_cli_track_eval_pipeline(tmp_path, seq_dir, capsys):
    out = tmp_path / "traj.csv"
    assert main(["track", str(seq_dir / "frames.jsonl"), "--out", str(out), "--jobs", "2"]) == 0
    log = read_jsonl(tmp_path / "traj.run.jsonl")
    assert log[0]["type"] == "run" and log[0]["schema_version"] == 1
    pairs = [r for r in log if r["type"] == "pair"]
    assert len(pairs) == 39 and all("alpha_effective" in r and "icp_residual" in r for r in pairs)
    capsys.readouterr()
    report = tmp_path / "rep.json"
    assert main(["eval", str(out), str(seq_dir / "gt.csv"), "--out", str(report),
                 "--per-frame-csv", str(tmp_path / "pf.csv")]) == 0
    table = capsys.readouterr().out
    assert "ARE (deg)" in table
    data = json.loads(report.read_text())
    assert data["are_deg"] < 0.2 and data["ate"] < 1e-6
    assert (tmp_path / "pf.csv").read_text().startswith("frame,rot_err_deg")


def test_cli_eval_json_and_flags(tmp_path, seq_dir, capsys):
    gt = str(seq_dir / "gt.csv")
    assert main(["eval", gt, gt, "--json", "--no-umeyama", "--no-first-frame-align"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["rre_deg"] == 0.0 and data["alignment"]["umeyama"] is False


def test_cli_validate(tmp_path, seq_dir, capsys):
    gt = str(seq_dir / "gt.csv")
    intr = tmp_path / "K.json"
    intr.write_text(json.dumps({"fx": 500, "fy": 500, "cx": 320, "cy": 240}))
    shifted = random_walk_trajectory(np.random.default_rng(0), n=40)
    shifted.translations[:, 2] += 5.0
    write_trajectory(tmp_path / "s.csv", shifted)
    assert main(["validate", str(tmp_path / "s.csv"), str(tmp_path / "s.csv"), "--windows", "gaps:2,3",
                 "--intrinsics", str(intr)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["trans_space"] == "image" and rep["n_windows"] == 35
    assert rep["mean"]["rot"] < 1e-12
    assert main(["validate", gt, gt, "--windows", "nonsense"]) == 2
    assert _diag(capsys).startswith("hocue: error[")


def test_cli_retarget_records_config(tmp_path, seq_dir):
    cfg = tmp_path / "rt.json"
    cfg.write_text(json.dumps({"schema_version": 1, "T_base_cam": {"rotation": [0, 0, 0, 1], "translation": [1, 2, 3]},
                               "T_eef_obj": {"translation": [0, 0, 0.1]}, "rate_hz": 15}))
    out = tmp_path / "eef.csv"
    assert main(["retarget", str(seq_dir / "gt.csv"), "--config", str(cfg), "--out", str(out)]) == 0
    comments = read_trajectory_comments(out)
    assert any(c.startswith("T_base_cam=") for c in comments)
    assert any(c.startswith("T_eef_obj=") for c in comments)
    assert len(read_trajectory(out)) == 40


def test_cli_retarget_rejects_unknown_key(tmp_path, seq_dir, capsys):
    cfg = tmp_path / "rt.json"
    cfg.write_text(json.dumps({"T_base_camera": {}}))
    assert main(["retarget", str(seq_dir / "gt.csv"), "--config", str(cfg)]) == 2
    assert _diag(capsys).startswith("hocue: error[config]:")


def test_cli_synth_and_plot_data(tmp_path, capsys):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"n_frames": 6, "n_points": 100, "seed": 2}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "seq")]) == 0
    assert (tmp_path / "seq" / "frames.jsonl").exists()
    capsys.readouterr()
    assert main(["plot-data", str(tmp_path / "seq" / "gt.csv")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "frame,angle_from_first_deg,tx,ty,tz,flags" and len(lines) == 7
    assert main(["track", str(tmp_path / "seq" / "frames.jsonl"), "--out", str(tmp_path / "t.csv")]) == 0
    assert main(["plot-data", str(tmp_path / "t.run.jsonl"), "--out", str(tmp_path / "alpha.csv")]) == 0
    rows = (tmp_path / "alpha.csv").read_text().splitlines()
    assert rows[0].startswith("i,j,alpha_requested,alpha_effective") and len(rows) == 6


def test_cli_schema_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "f.jsonl"
    bad.write_text('{"frame": 0, "object_points": [[0, 0]]}\n')
    assert main(["track", str(bad)]) == 2
    line = _diag(capsys)
    assert line.startswith("hocue: error[schema]:")
    assert "line 1" in line and "object_points" in line


def test_cli_unknown_config_key(tmp_path, seq_dir, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"anchor": {"perod": 3}}))
    assert main(["track", str(seq_dir / "frames.jsonl"), "--config", str(cfg)]) == 2
    assert "anchor.perod" in _diag(capsys)


def test_cli_tracking_gap_exit_code(tmp_path, capsys):
    obs = [FrameObservation(f, PointCloud(np.random.default_rng(f).normal(size=(50, 3)))) for f in range(3)]
    obs[2] = FrameObservation(2, PointCloud(np.zeros((0, 3))))
    write_frames(tmp_path / "f.jsonl", obs)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"gap_policy": "fail"}))
    assert main(["track", str(tmp_path / "f.jsonl"), "--config", str(cfg), "--out", str(tmp_path / "t.csv")]) == 3
    line = _diag(capsys)
    assert line.startswith("hocue: error[missing-pair]:") and "(1, 2)" in line
    # the default policy keeps going and flags the frame
    assert main(["track", str(tmp_path / "f.jsonl"), "--out", str(tmp_path / "t.csv")]) == 0
    t = read_trajectory(tmp_path / "t.csv")
    assert t.flags[2] & TrajFlag.FALLBACK and t.flags[2] & TrajFlag.INTERPOLATED


def test_cli_missing_file(capsys):
    assert main(["eval", "nope.csv", "nope2.csv"]) == 2
    assert _diag(capsys).startswith("hocue: error[io]:")


def test_cli_usage_error(capsys):
    assert main(["frobnicate"]) == 2


def test_cli_provider_file(tmp_path, seq_dir):
    side = tmp_path / "side.jsonl"
    side.write_text("".join(json.dumps({"i": i, "j": i + 1, "alpha": 0.5, "weights": [1] * 21}) + "\n" for i in range(39)))
    out = tmp_path / "t.csv"
    assert main(["track", str(seq_dir / "frames.jsonl"), "--provider", f"file:{side}", "--out", str(out)]) == 0
    pairs = [r for r in read_jsonl(tmp_path / "t.run.jsonl") if r["type"] == "pair"]
    assert all(r["alpha_effective"] == 0.5 for r in pairs)


def test_cli_log_level_env(monkeypatch, tmp_path, seq_dir, capsys):
    monkeypatch.setenv("HOCUE_LOG_LEVEL", "info")
    import logging

    logging.getLogger().handlers.clear()
    assert main(["track", str(seq_dir / "frames.jsonl"), "--out", str(tmp_path / "t.csv"), "--jobs", "1"]) == 0
    assert "wrote" in capsys.readouterr().err
    logging.getLogger().handlers.clear()
    logging.getLogger().setLevel(logging.WARNING)


def test_default_run_config_serializable():
    json.dumps(RunConfig().to_dict())

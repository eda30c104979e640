"""End-to-end command-line pipeline: file outputs, determinism, exit codes."""

import csv
import json
import os

import numpy as np
import pytest

from groupmotion.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from groupmotion.motion import default_skeleton, read_motion


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


FAST = {"schedule": {"t_train": 50, "ddim_steps": 5},
        "optimizer": {"max_steps": 5}}


def compose_config(tmp_path, name="compose.json", **scene_extra):
    scene = {"participants": [1, 2], "first_label": "approach",
             "n_frames": 12,
             "first_penalties": [{"kind": "overlap", "weight": 1.0,
                                  "params": {"delta": 0.3}}]}
    scene.update(scene_extra)
    return write_config(tmp_path, name, dict(FAST, scene=scene))


def read_manifest(out):
    with open(os.path.join(out, "manifest.json")) as f:
        return json.load(f)


# -- corpus ----------------------------------------------------------------------


def test_corpus_writes_expected_file_count(tmp_path):
    cfg = write_config(tmp_path, "c.json",
                       {"labels": ["approach", "face-and-talk"],
                        "samples_per_label": 3, "n_frames": 12})
    out = str(tmp_path / "corpus")
    assert main(["corpus", "--config", cfg, "--out", out]) == EXIT_OK
    motions = [f for f in os.listdir(out) if f.endswith(".motion")]
    assert len(motions) == 2 * 2 * 3  # two persons per sample
    assert os.path.isfile(os.path.join(out, "stats.json"))
    assert read_manifest(out)["n_samples"] == 6


def test_corpus_dry_run_writes_nothing(tmp_path, capsys):
    cfg = write_config(tmp_path, "c.json", {"samples_per_label": 1})
    out = tmp_path / "corpus"
    assert main(["corpus", "--config", cfg, "--out", str(out),
                 "--dry-run"]) == EXIT_OK
    assert not out.exists()
    assert "corpus" in capsys.readouterr().out


def test_corpus_rejects_unknown_label(tmp_path, capsys):
    cfg = write_config(tmp_path, "c.json", {"labels": ["tango"]})
    assert main(["corpus", "--config", cfg,
                 "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "tango" in capsys.readouterr().err


# -- compose ----------------------------------------------------------------------


def test_compose_writes_runs_and_losses(tmp_path):
    cfg = compose_config(tmp_path)
    out = str(tmp_path / "runs")
    assert main(["compose", "--config", cfg, "--out", out,
                 "--seed", "3,4"]) == EXIT_OK
    manifest = read_manifest(out)
    assert manifest["seeds"] == [3, 4]
    skeleton = default_skeleton()
    for run in manifest["runs"]:
        run_dir = os.path.join(out, run["dir"])
        assert sorted(run["files"]) == ["person1.motion", "person2.motion"]
        for fname in run["files"]:
            seq = read_motion(os.path.join(run_dir, fname), skeleton)
            assert seq.frames.shape == (12, skeleton.D)
            assert np.isfinite(seq.frames).all()
        assert os.path.isfile(os.path.join(run_dir, "loss.csv"))


def test_compose_byte_identical_across_invocations(tmp_path):
    cfg = compose_config(tmp_path)
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["compose", "--config", cfg, "--out", out,
                     "--seed", "7"]) == EXIT_OK
        outs.append(out)
    for fname in ("seed00007/person1.motion", "seed00007/person2.motion",
                  "manifest.json"):
        b1 = open(os.path.join(outs[0], fname), "rb").read()
        b2 = open(os.path.join(outs[1], fname), "rb").read()
        assert b1 == b2, fname


def test_compose_jobs_matches_serial(tmp_path):
    cfg = compose_config(tmp_path)
    serial, parallel = str(tmp_path / "s"), str(tmp_path / "p")
    assert main(["compose", "--config", cfg, "--out", serial,
                 "--seed", "1,2"]) == EXIT_OK
    assert main(["compose", "--config", cfg, "--out", parallel,
                 "--seed", "1,2", "--jobs", "2"]) == EXIT_OK
    for run in ("seed00001", "seed00002"):
        for person in ("person1.motion", "person2.motion"):
            rel = os.path.join(run, person)
            assert open(os.path.join(serial, rel), "rb").read() == \
                open(os.path.join(parallel, rel), "rb").read()


def test_compose_dry_run_prints_plan(tmp_path, capsys):
    cfg = compose_config(tmp_path)
    out = tmp_path / "runs"
    assert main(["compose", "--config", cfg, "--out", str(out),
                 "--dry-run"]) == EXIT_OK
    plan = capsys.readouterr().out
    assert "approach" in plan and "(1, 2)" in plan
    assert not out.exists()


def test_compose_refuses_nonempty_out(tmp_path):
    cfg = compose_config(tmp_path)
    out = tmp_path / "runs"
    out.mkdir()
    (out / "junk.txt").write_text("x")
    assert main(["compose", "--config", cfg,
                 "--out", str(out)]) == EXIT_CONFIG
    assert main(["compose", "--config", cfg, "--out", str(out),
                 "--overwrite", "--seed", "1"]) == EXIT_OK


def test_compose_missing_field_names_it(tmp_path, capsys):
    cfg = write_config(tmp_path, "bad.json",
                       {"scene": {"participants": [1, 2]}})
    assert main(["compose", "--config", cfg,
                 "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "first_label" in capsys.readouterr().err


def test_compose_malformed_json(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["compose", "--config", str(path),
                 "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "JSON" in capsys.readouterr().err


def test_compose_missing_config_flag(tmp_path, capsys):
    assert main(["compose", "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_compose_bad_penalty_kind(tmp_path, capsys):
    cfg = compose_config(tmp_path,
                         first_penalties=[{"kind": "gravity", "weight": 1.0}])
    assert main(["compose", "--config", cfg,
                 "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "gravity" in capsys.readouterr().err


def test_compose_three_person_step(tmp_path):
    cfg = compose_config(
        tmp_path, participants=[1, 2, 3],
        steps=[{"target": 3, "reference": 1, "label": "approach",
                "opt_subset": [1, 2]}])
    out = str(tmp_path / "runs")
    assert main(["compose", "--config", cfg, "--out", out,
                 "--seed", "5"]) == EXIT_OK
    files = read_manifest(out)["runs"][0]["files"]
    assert sorted(files) == ["person1.motion", "person2.motion",
                             "person3.motion"]


# -- train ------------------------------------------------------------------------


def test_train_writes_weights_and_curve(tmp_path):
    corpus_cfg = write_config(tmp_path, "c.json",
                              {"labels": ["approach"], "samples_per_label": 2,
                               "n_frames": 8})
    corpus_dir = str(tmp_path / "corpus")
    assert main(["corpus", "--config", corpus_cfg,
                 "--out", corpus_dir]) == EXIT_OK
    train_cfg = write_config(tmp_path, "t.json", dict(
        FAST, corpus_dir=corpus_dir, epochs=2, hidden=8))
    out = str(tmp_path / "model")
    assert main(["train", "--config", train_cfg, "--out", out]) == EXIT_OK
    for fname in ("weights.npz", "stats.json", "loss.csv", "manifest.json"):
        assert os.path.isfile(os.path.join(out, fname)), fname
    with open(os.path.join(out, "loss.csv")) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["evaluation", "loss"] and len(rows) > 1
    # the trained model must be loadable for composition
    compose_cfg = json.loads(open(compose_config(tmp_path)).read())
    compose_cfg["prior"] = {"kind": "mlp",
                            "weights": os.path.join(out, "weights.npz"),
                            "hidden": 8}
    compose_cfg["stats"] = os.path.join(out, "stats.json")
    cfg2 = write_config(tmp_path, "c2.json", compose_cfg)
    assert main(["compose", "--config", cfg2, "--out",
                 str(tmp_path / "mlpruns"), "--seed", "1"]) == EXIT_OK


def test_train_missing_corpus_dir(tmp_path):
    cfg = write_config(tmp_path, "t.json",
                       {"corpus_dir": str(tmp_path / "nope")})
    assert main(["train", "--config", cfg,
                 "--out", str(tmp_path / "m")]) == EXIT_CONFIG


# -- extend -----------------------------------------------------------------------


@pytest.fixture()
def composed(tmp_path):
    cfg = compose_config(tmp_path)
    out = str(tmp_path / "base")
    assert main(["compose", "--config", cfg, "--out", out,
                 "--seed", "2"]) == EXIT_OK
    return out


def test_extend_adds_window_minus_kept_frames(tmp_path, composed):
    cfg = write_config(tmp_path, "e.json", dict(
        FAST, results_dir=composed,
        scene={"extension": [{"window": 12, "kept": 6,
                              "pairs": [[1, 2, "face-and-talk"]],
                              "boundary_frames": 4}]}))
    out = str(tmp_path / "ext")
    assert main(["extend", "--config", cfg, "--out", out]) == EXIT_OK
    skeleton = default_skeleton()
    for pid in (1, 2):
        before = read_motion(os.path.join(composed, "seed00002",
                                          f"person{pid}.motion"), skeleton)
        after = read_motion(os.path.join(out, "seed00002",
                                         f"person{pid}.motion"), skeleton)
        assert after.N == before.N + 6
        J = skeleton.J
        assert np.allclose(after.frames[:before.N, :3 * J],
                           before.frames[:, :3 * J], atol=1e-9)


def test_extend_requires_segments(tmp_path, composed):
    cfg = write_config(tmp_path, "e.json", dict(
        FAST, results_dir=composed, scene={"extension": []}))
    assert main(["extend", "--config", cfg,
                 "--out", str(tmp_path / "ext")]) == EXIT_CONFIG


# -- eval and export ---------------------------------------------------------------


def test_eval_reports_metrics(tmp_path, composed, capsys):
    cfg = write_config(tmp_path, "ev.json", {"results_dir": composed})
    out = str(tmp_path / "eval")
    assert main(["eval", "--config", cfg, "--out", out]) == EXIT_OK
    assert "overlap_rate=" in capsys.readouterr().out
    with open(os.path.join(out, "metrics.csv")) as f:
        rows = list(csv.reader(f))
    assert len(rows) == 1 + 1 + 1  # header, one run, aggregate
    assert rows[-1][0] == "aggregate"
    manifest = read_manifest(out)
    assert 0.0 <= manifest["overlap_rate"] <= 1.0


def test_export_round_trips_positions(tmp_path, composed):
    run_dir = os.path.join(composed, "seed00002")
    cfg = write_config(tmp_path, "x.json", {"inputs": [run_dir]})
    out = str(tmp_path / "exp")
    assert main(["export", "--config", cfg, "--out", out]) == EXIT_OK
    skeleton = default_skeleton()
    seq = read_motion(os.path.join(run_dir, "person1.motion"), skeleton)
    p = seq.joint_positions()
    with open(os.path.join(out, "positions.csv")) as f:
        rows = [r for r in csv.DictReader(f)
                if r["file"] == "person1.motion"]
    assert len(rows) == seq.N * skeleton.J
    for r in rows[:20]:
        n, j = int(r["frame"]), skeleton.joint_names.index(r["joint"])
        assert float(r["x"]) == p[n, j, 0]  # repr precision: exact
        assert float(r["y"]) == p[n, j, 1]
        assert float(r["z"]) == p[n, j, 2]


def test_export_missing_input(tmp_path):
    cfg = write_config(tmp_path, "x.json",
                       {"inputs": [str(tmp_path / "ghost.motion")]})
    assert main(["export", "--config", cfg,
                 "--out", str(tmp_path / "exp")]) == EXIT_CONFIG


# -- generic flag handling -----------------------------------------------------------


def test_all_subcommands_accept_standard_flags():
    from groupmotion.cli import build_parser
    parser = build_parser()
    for name in ("corpus", "train", "compose", "extend", "eval", "export"):
        args = parser.parse_args([name, "--config", "c", "--out", "o",
                                  "--seed", "1", "--jobs", "2",
                                  "--dry-run", "--overwrite"])
        assert args.command == name and args.jobs == 2 and args.dry_run


def test_seed_flag_overrides_config(tmp_path):
    cfg = compose_config(tmp_path)
    out = str(tmp_path / "runs")
    assert main(["compose", "--config", cfg, "--out", out,
                 "--seed", "11"]) == EXIT_OK
    assert read_manifest(out)["seeds"] == [11]

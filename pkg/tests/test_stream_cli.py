"""Streaming engine and command-line pipeline: records, determinism,
checkpoint/resume, evaluation, tuning, bench."""

import json
import os
import re
import subprocess
import sys
import threading
import time

import numpy as np
import pytest

from netstream import DatasetSpec, StreamConfig, StreamingEstimator, \
    gen_dataset, write_dataset
from netstream.stream import record_to_json

WALL = re.compile(r'"wall_ms":[^,]+')


def mask_wall(text):
    """wall_ms is the one sanctioned nondeterministic field."""
    return WALL.sub('"wall_ms":0', text)


def run_cli(args, **kwargs):
    return subprocess.run([sys.executable, "-m", "netstream.cli", *args],
                          capture_output=True, text=True, **kwargs)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("data")
    spec = DatasetSpec(p=6, segments=3, seg_len=25, graph_model="ba", m=2, seed=9)
    data = gen_dataset(spec)
    obs = tmp / "obs.csv"
    truth = tmp / "truth.json"
    write_dataset(data, obs, truth)
    return data, obs, truth


class TestStreamingEstimator:
    def test_burn_in_then_records(self, small_dataset):
        data, _, _ = small_dataset
        engine = StreamingEstimator(6, StreamConfig(mode="adaptive", burn_in_n=15))
        records = []
        for i, row in enumerate(data.observations[:30], start=1):
            rec = engine.feed(row)
            if i <= 15:
                assert rec is None
            else:
                assert rec["t"] == i
                records.append(rec)
        assert len(records) == 15
        for rec in records:
            assert set(rec) == {"t", "r_t", "omega_t", "edges", "converged",
                                "iters", "wall_ms", "trace_of_S"}
            for i, j, w in rec["edges"]:
                assert 0 <= i < j < 6 and w != 0.0

    def test_nonconverged_keeps_anchor(self):
        rng = np.random.default_rng(0)
        cfg = StreamConfig(mode="ewma", burn_in_n=4, max_iters=1, epsilon=1e-18)
        engine = StreamingEstimator(3, cfg)
        for row in rng.normal(size=(8, 3)):
            engine.feed(row)
        anchor_before = engine.theta_anchor.copy()
        rec = engine.feed(rng.normal(size=3))
        assert rec["converged"] is False
        assert np.array_equal(engine.theta_anchor, anchor_before)

    def test_checkpoint_resume_identical_records(self, small_dataset):
        data, _, _ = small_dataset
        cfg = StreamConfig(mode="adaptive", burn_in_n=10)
        full = StreamingEstimator(6, cfg)
        full_records = [full.feed(row) for row in data.observations[:40]]

        part = StreamingEstimator(6, cfg)
        for row in data.observations[:25]:
            part.feed(row)
        blob = json.dumps(part.to_checkpoint())
        resumed = StreamingEstimator.from_checkpoint(json.loads(blob))
        for i, row in enumerate(data.observations[25:40], start=25):
            a = full_records[i]
            b = resumed.feed(row)
            assert mask_wall(record_to_json(a)) == mask_wall(record_to_json(b))

    def test_emit_variants(self, small_dataset):
        data, _, _ = small_dataset
        eng = StreamingEstimator(6, StreamConfig(burn_in_n=5, emit="full_matrix"))
        rec = None
        for row in data.observations[:8]:
            rec = eng.feed(row) or rec
        assert "Z" in rec and "S" in rec and len(rec["Z"]) == 6
        eng = StreamingEstimator(6, StreamConfig(burn_in_n=5, emit="metrics"))
        rec = None
        for row in data.observations[:8]:
            rec = eng.feed(row) or rec
        assert "edges" not in rec


class TestCliStream:
    def test_records_and_determinism(self, small_dataset, tmp_path):
        _, obs, _ = small_dataset
        args = ["stream", "--input", str(obs), "--mode", "adaptive",
                "--burn-in", "10"]
        first = run_cli(args)
        second = run_cli(args)
        assert first.returncode == 0, first.stderr
        assert first.stdout.count("\n") == 75 - 10
        assert mask_wall(first.stdout) == mask_wall(second.stdout)
        assert "skipping malformed row at line 1" in first.stderr  # header line
        rec = json.loads(first.stdout.splitlines()[0])
        assert rec["t"] == 11
        assert list(rec) == ["t", "r_t", "omega_t", "edges", "converged",
                             "iters", "wall_ms", "trace_of_S"]

    def test_stdin_stream(self, small_dataset):
        data, _, _ = small_dataset
        rows = "\n".join(" ".join(repr(float(v)) for v in row)
                         for row in data.observations[:20])
        out = run_cli(["stream", "--burn-in", "5"], input=rows + "\n")
        assert out.returncode == 0
        assert out.stdout.count("\n") == 15

    def test_checkpoint_restart_matches_uninterrupted(self, small_dataset,
                                                      tmp_path):
        data, obs, _ = small_dataset
        ckpt = tmp_path / "state.ckpt"
        out_a = tmp_path / "a.jsonl"
        # uninterrupted reference
        ref = run_cli(["stream", "--input", str(obs), "--burn-in", "10",
                       "--output", str(out_a)])
        assert ref.returncode == 0
        # first 30 rows only
        part_file = tmp_path / "part.csv"
        lines = open(obs).read().splitlines(keepends=True)
        with open(part_file, "w") as fh:
            fh.writelines(lines[:31])   # header + 30 rows
        out_b = tmp_path / "b.jsonl"
        r1 = run_cli(["stream", "--input", str(part_file), "--burn-in", "10",
                      "--output", str(out_b), "--checkpoint", str(ckpt)])
        assert r1.returncode == 0
        # resume against the full file
        r2 = run_cli(["stream", "--input", str(obs), "--burn-in", "10",
                      "--output", str(out_b), "--checkpoint", str(ckpt),
                      "--resume"])
        assert r2.returncode == 0
        assert "resumed from checkpoint at t=30" in r2.stderr
        assert mask_wall(open(out_a).read()) == mask_wall(open(out_b).read())

    def test_dimension_change_fatal(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0,2.0\n3.0,4.0\n5.0\n")
        out = run_cli(["stream", "--input", str(bad), "--burn-in", "0"])
        assert out.returncode == 2
        assert "dimension changed" in out.stderr

    def test_malformed_rows_skipped(self, tmp_path):
        f = tmp_path / "rows.csv"
        f.write_text("1.0,2.0\nnot,a,row\n3.0,4.0\n2.0,1.0\n5.0,0.0\n")
        out = run_cli(["stream", "--input", str(f), "--burn-in", "2"])
        assert out.returncode == 0
        assert "skipping malformed row at line 2" in out.stderr
        ts = [json.loads(l)["t"] for l in out.stdout.splitlines()]
        assert ts == [3, 4]

    def test_follow_mode(self, small_dataset, tmp_path):
        data, _, _ = small_dataset
        grow = tmp_path / "grow.csv"
        grow.write_text("")

        def writer():
            with open(grow, "a") as fh:
                for row in data.observations[:12]:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
                    fh.flush()
                    time.sleep(0.02)

        th = threading.Thread(target=writer)
        th.start()
        out = run_cli(["stream", "--input", str(grow), "--burn-in", "5",
                       "--follow", "--idle-timeout", "1.5"])
        th.join()
        assert out.returncode == 0
        assert out.stdout.count("\n") == 7

    def test_config_file_overrides_flags(self, small_dataset, tmp_path):
        _, obs, _ = small_dataset
        cfg = tmp_path / "run.cfg"
        cfg.write_text("burn_in_n=20\nlambda1=0.3\n")
        out = run_cli(["stream", "--input", str(obs), "--burn-in", "5",
                       "--config", str(cfg)])
        assert out.returncode == 0
        rec = json.loads(out.stdout.splitlines()[0])
        assert rec["t"] == 21  # config burn_in_n beat the flag


class TestCliSimulateEvaluate:
    def test_simulate_deterministic(self, tmp_path):
        args = ["simulate", "--p", "4", "--segments", "2", "--seg-len", "6",
                "--seed", "7"]
        run_cli(args + ["--out", str(tmp_path / "a.csv"),
                        "--truth", str(tmp_path / "a.json")])
        run_cli(args + ["--out", str(tmp_path / "b.csv"),
                        "--truth", str(tmp_path / "b.json")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_env_seed_fallback(self, tmp_path):
        env = dict(os.environ, NETSTREAM_SEED="7")
        out = run_cli(["simulate", "--p", "4", "--segments", "2", "--seg-len",
                       "6", "--out", str(tmp_path / "c.csv"),
                       "--truth", str(tmp_path / "c.json")], env=env)
        assert out.returncode == 0
        run_cli(["simulate", "--p", "4", "--segments", "2", "--seg-len", "6",
                 "--seed", "7", "--out", str(tmp_path / "d.csv"),
                 "--truth", str(tmp_path / "d.json")])
        assert (tmp_path / "c.csv").read_bytes() == (tmp_path / "d.csv").read_bytes()

    def test_oracle_run_scores_all_ones(self, small_dataset, tmp_path):
        data, _, truth = small_dataset
        run_file = tmp_path / "oracle.jsonl"
        with open(run_file, "w") as fh:
            for t in range(1, data.T + 1):
                seg = data.truth_at(t)
                edges = [[i, j, float(seg.precision[i, j])]
                         for i, j in sorted(seg.edge_set)]
                fh.write(json.dumps({"t": t, "r_t": 0.95, "edges": edges,
                                     "iters": 1, "wall_ms": 0.0}) + "\n")
        out = run_cli(["evaluate", "--run", str(run_file), "--truth", str(truth)])
        assert out.returncode == 0
        lines = out.stdout.splitlines()
        assert lines[0].startswith("t,")
        for line in lines[1:-1]:
            assert line.split(",")[3] == "1.0"
        summary = json.loads(lines[-1])
        assert summary["segment_plateau_f"] == [1.0, 1.0, 1.0]
        assert summary["recovery_times"] == [1, 1]
        assert len(summary["r_windows"]) == 2

    def test_frozen_run_shows_drop(self, small_dataset, tmp_path):
        data, _, truth = small_dataset
        run_file = tmp_path / "frozen.jsonl"
        frozen = sorted(data.segments[0].edge_set)
        with open(run_file, "w") as fh:
            for t in range(1, data.T + 1):
                fh.write(json.dumps({"t": t,
                                     "edges": [[i, j, 0.5] for i, j in frozen]})
                         + "\n")
        out = run_cli(["evaluate", "--run", str(run_file), "--truth", str(truth),
                       "--format", "jsonl"])
        assert out.returncode == 0
        lines = out.stdout.splitlines()
        recs = [json.loads(l) for l in lines[:-1]]
        assert recs[0]["f_score"] == 1.0
        assert recs[25]["f_score"] < 1.0
        summary = json.loads(lines[-1])
        assert summary["segment_plateau_f"][1] < 0.9
        assert summary["recovery_times"][0] is None

    def test_out_of_range_record_fatal(self, small_dataset, tmp_path):
        _, _, truth = small_dataset
        run_file = tmp_path / "bad.jsonl"
        run_file.write_text(json.dumps({"t": 9999, "edges": []}) + "\n")
        out = run_cli(["evaluate", "--run", str(run_file), "--truth", str(truth)])
        assert out.returncode == 2
        assert "outside dataset range" in out.stderr


class TestCliTuneBench:
    def test_single_point_grid(self, small_dataset, tmp_path):
        _, obs, _ = small_dataset
        cfg_out = tmp_path / "chosen.cfg"
        out = run_cli(["tune", "--input", str(obs), "--burn-in", "15",
                       "--grid1", "0.2", "--grid2", "0.1",
                       "--out", str(cfg_out)])
        assert out.returncode == 0
        assert "selected lambda1=0.2 lambda2=0.1" in out.stderr
        text = cfg_out.read_text()
        assert "lambda1=0.2" in text and "lambda2=0.1" in text

    def test_tune_deterministic(self, small_dataset):
        _, obs, _ = small_dataset
        args = ["tune", "--input", str(obs), "--burn-in", "12",
                "--grid1", "0.1,0.2", "--grid2", "0.1,0.2"]
        assert run_cli(args).stdout == run_cli(args).stdout

    def test_bench_table(self):
        out = run_cli(["bench", "--p-list", "6", "--reps", "1"])
        assert out.returncode == 0
        lines = out.stdout.splitlines()
        assert lines[0] == "p,mode,mean_ms,median_ms,n_updates"
        assert len(lines) == 3
        for line in lines[1:]:
            parts = line.split(",")
            assert parts[0] == "6" and float(parts[2]) > 0

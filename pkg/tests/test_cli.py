"""End-to-end tests of the command line interface via subprocess."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from kocl.data_io import LABEL_CLASS, LABEL_REAL, write_feature_file

SMALL_STREAM = ["--tasks", "2", "--classes-per-task", "3", "--points-per-task", "40"]


def kocl(*args, env_extra=None, **kwargs):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "kocl.cli", *args],
        capture_output=True,
        text=True,
        env=env,
        **kwargs,
    )


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh]


@pytest.fixture(scope="module")
def class_file(tmp_path_factory):
    rng = np.random.default_rng(0)
    path = tmp_path_factory.mktemp("data") / "points.kocl"
    records = [(rng.standard_normal(4).astype(np.float32), int(rng.integers(3))) for _ in range(40)]
    write_feature_file(path, records, dim=4, num_classes=3, label_kind=LABEL_CLASS)
    return str(path)


@pytest.fixture(scope="module")
def real_file(tmp_path_factory):
    rng = np.random.default_rng(1)
    path = tmp_path_factory.mktemp("data") / "reals.kocl"
    records = [(rng.standard_normal(3).astype(np.float32), float(rng.standard_normal())) for _ in range(30)]
    write_feature_file(path, records, dim=3, num_classes=1, label_kind=LABEL_REAL)
    return str(path)


class TestClassify:
    def test_synthetic_run_structure(self, tmp_path):
        out = tmp_path / "run.jsonl"
        proc = kocl("classify", *SMALL_STREAM, "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        records = read_jsonl(out)
        assert records[0]["kind"] == "config"
        assert records[0]["format_version"] == 1
        assert records[0]["config"]["chunk_size"] == 10  # synthetic default
        chunk_records = [r for r in records if r["kind"] == "chunk"]
        assert len(chunk_records) == 8
        summary = records[-1]
        assert summary["kind"] == "summary"
        assert summary["n_seen"] == 80
        assert 0.0 <= summary["running_accuracy"] <= 1.0

    def test_feature_file_defaults_to_larger_chunks(self, class_file, tmp_path):
        out = tmp_path / "run.jsonl"
        proc = kocl("classify", "--data", class_file, "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        config = read_jsonl(out)[0]["config"]
        assert config["chunk_size"] == 128

    def test_regression_mode_on_real_labels(self, real_file, tmp_path):
        out = tmp_path / "run.jsonl"
        proc = kocl(
            "classify", "--mode", "regression", "--data", real_file,
            "--chunk-size", "5", "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        summary = read_jsonl(out)[-1]
        assert summary["running_accuracy"] is None
        assert summary["final_alpha"] is None
        assert summary["n_seen"] == 30

    def test_classification_rejects_real_labels(self, real_file):
        proc = kocl("classify", "--data", real_file)
        assert proc.returncode == 3
        assert "class-labelled" in proc.stderr

    def test_fixed_gamma_baseline(self, tmp_path):
        out = tmp_path / "run.jsonl"
        proc = kocl(
            "classify", *SMALL_STREAM, "--no-learn-gamma", "--gamma", "1.0",
            "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        summary = read_jsonl(out)[-1]
        assert summary["final_gamma"] == 1.0

    def test_gamma_flag_conflicts(self):
        assert kocl("classify", "--gamma", "0.9", "--learn-gamma").returncode == 2
        assert kocl("classify", "--gamma", "0.9", "--gamma-init", "0.8").returncode == 2
        assert kocl("classify", "--gamma", "1.5").returncode == 2
        assert kocl("classify", "--gamma-init", "0.0").returncode == 2

    def test_unknown_flag_exits_two(self):
        assert kocl("classify", "--frobnicate").returncode == 2

    def test_missing_data_exits_three(self):
        assert kocl("classify", "--data", "/nonexistent/x.kocl").returncode == 3

    def test_nonfinite_csv_exits_four(self, tmp_path):
        path = tmp_path / "nan.csv"
        path.write_text("2,2\nnan,1.0,0\n")
        proc = kocl("classify", "--data", str(path))
        assert proc.returncode == 4

    def test_csv_regression_and_normalization(self, tmp_path):
        path = tmp_path / "pts.csv"
        rows = ["2,1"] + [f"{i}.0,{i + 1}.0,{0.5 * i}" for i in range(8)]
        path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "run.jsonl"
        proc = kocl(
            "classify", "--mode", "regression", "--data", str(path),
            "--normalize-features", "--chunk-size", "4", "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        assert read_jsonl(out)[-1]["n_seen"] == 8

    def test_replay_and_transition_flags(self, tmp_path):
        out = tmp_path / "run.jsonl"
        proc = kocl(
            "classify", *SMALL_STREAM, "--transition", "last",
            "--replay-capacity", "50", "--replay-sample", "5",
            "--learn-alpha", "--mc-samples", "16", "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        config = read_jsonl(out)[0]["config"]
        assert config["transition"] == "last"
        assert config["replay_sample"] == 5


class TestTimeseries:
    def test_run_and_summary(self, tmp_path):
        out = tmp_path / "ts.jsonl"
        proc = kocl("timeseries", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        records = read_jsonl(out)
        assert records[0]["kind"] == "config"
        steps = [r for r in records if r["kind"] == "step"]
        assert len(steps) == 2 * 3058
        summary = records[-1]
        assert summary["kind"] == "summary"
        assert summary["change_count"] == 7
        assert summary["advantage"] > 0


class TestRerun:
    def test_classify_rerun_is_bitwise(self, tmp_path):
        out = tmp_path / "run.jsonl"
        assert kocl("classify", *SMALL_STREAM, "--out", str(out)).returncode == 0
        proc = kocl("rerun", str(out), "--check")
        assert proc.returncode == 0, proc.stderr
        assert "reproducible" in proc.stdout

    def test_rerun_to_new_file_matches(self, tmp_path):
        first = tmp_path / "a.jsonl"
        second = tmp_path / "b.jsonl"
        kocl("classify", *SMALL_STREAM, "--seed", "5", "--out", str(first))
        proc = kocl("rerun", str(first), "--out", str(second))
        assert proc.returncode == 0
        assert first.read_text() == second.read_text()

    def test_tampered_log_fails_check(self, tmp_path):
        out = tmp_path / "run.jsonl"
        kocl("classify", *SMALL_STREAM, "--out", str(out))
        lines = out.read_text().splitlines()
        lines[-1] = lines[-1].replace('"n_seen": 80', '"n_seen": 81')
        out.write_text("\n".join(lines) + "\n")
        proc = kocl("rerun", str(out), "--check")
        assert proc.returncode == 1
        assert "MISMATCH" in proc.stderr

    def test_non_log_input_exits_three(self, tmp_path):
        path = tmp_path / "junk.jsonl"
        path.write_text('{"kind": "step"}\n')
        assert kocl("rerun", str(path), "--check").returncode == 3


class TestSelfcheckCommand:
    def test_healthy_exit_zero_with_machine_summary(self):
        proc = kocl("selfcheck")
        assert proc.returncode == 0, proc.stderr
        summary = json.loads(proc.stdout.strip().splitlines()[-1])
        assert summary["failed"] == 0
        assert summary["passed"] == 7

    def test_fault_injection_exits_nonzero(self):
        proc = kocl("selfcheck", "--inject-asymmetry")
        assert proc.returncode == 1
        summary = json.loads(proc.stdout.strip().splitlines()[-1])
        assert summary["checks"]["psd-invariants"] is False


class TestSweep:
    def test_parallel_runs_write_disjoint_outputs(self, tmp_path):
        out = tmp_path / "grid.jsonl"
        proc = kocl(
            "classify", *SMALL_STREAM, "--sweep", "delta_lr=0.1,0.3",
            "--sweep", "seed=0,1", "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        produced = sorted(p.name for p in tmp_path.glob("grid-*.jsonl"))
        assert len(produced) == 4
        for path in tmp_path.glob("grid-*.jsonl"):
            records = read_jsonl(path)
            assert records[0]["kind"] == "config"
            assert records[-1]["kind"] == "summary"

    def test_sweep_requires_out(self):
        assert kocl("classify", "--sweep", "seed=0,1").returncode == 2

    def test_unknown_sweep_key_rejected(self, tmp_path):
        proc = kocl(
            "classify", "--sweep", "bogus=1,2", "--out", str(tmp_path / "x.jsonl")
        )
        assert proc.returncode == 2


class TestLogging:
    def test_env_var_enables_debug_logging(self, tmp_path):
        proc = kocl(
            "classify", "--tasks", "1", "--classes-per-task", "2",
            "--points-per-task", "20", "--out", str(tmp_path / "x.jsonl"),
            env_extra={"KOCL_LOG": "debug"},
        )
        assert proc.returncode == 0
        assert "DEBUG" in proc.stderr

    def test_quiet_by_default(self, tmp_path):
        proc = kocl(
            "classify", "--tasks", "1", "--classes-per-task", "2",
            "--points-per-task", "20", "--out", str(tmp_path / "x.jsonl"),
        )
        assert proc.stderr == ""

"""CLI: end-to-end mock runs, reports, scaling, retrieval, validation."""

from __future__ import annotations

import json
from pathlib import Path

from kernelforge.cli import main
from kernelforge.metrics import load_log
from tests.conftest import write_benchmark

DATA = Path(__file__).parent / "data"


def write_fixture_run_inputs(tmp_path):
    """Config + benchmark + transcript matching the frozen golden log."""
    benchmark = write_benchmark(
        tmp_path,
        tasks=[{"id": "alpha", "difficulty": 2}, {"id": "beta", "difficulty": 4}],
        corpus_entries=[
            {"id": "e1", "code": "def add(a, b):\n    return a + b\n"},
            {"id": "e2", "code": "def mul(a, b):\n    return a * b\n"},
        ],
    )
    transcript = [
        "Try this:\n```python\n# mock-call-error: HIP error: invalid device function\n"
        "def alpha(a, b):\n    return a\n```",
        "```python\n# mock-latency: cand=2.0 ref=4.0\ndef alpha(a, b):\n    return a + b\n```",
        "```python\n# mock-latency: cand=1.0 ref=2.0\ndef beta(a, b):\n    return a * b\n```",
        "```python\n# mock-latency: cand=1.0 ref=4.0\ndef beta(a, b):\n    return a * b\n```",
    ]
    (tmp_path / "transcript.json").write_text(json.dumps(transcript))
    config = {
        "backend": {"kind": "mock", "transcript": "transcript.json"},
        "agent": {"max_iterations": 2},
        "executor": {"kind": "mock"},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    return config_path, benchmark


def run_fixture_sweep(tmp_path, extra_args=()):
    config_path, benchmark = write_fixture_run_inputs(tmp_path)
    out_dir = tmp_path / "out"
    code = main(
        [
            "run",
            "--config", str(config_path),
            "--benchmark", str(benchmark),
            "--out", str(out_dir),
            "--replicas", "1",
            "--iterations", "2",
            *extra_args,
        ]
    )
    return code, out_dir


class TestCmdRun:
    def test_exit_zero_even_with_failures(self, tmp_path, capsys):
        code, out_dir = run_fixture_sweep(tmp_path)
        assert code == 0
        assert "run complete" in capsys.readouterr().out
        assert (out_dir / "replica_000.jsonl").exists()

    def test_log_matches_golden_file(self, tmp_path):
        _, out_dir = run_fixture_sweep(tmp_path)
        lines = (out_dir / "replica_000.jsonl").read_text().splitlines()
        record_lines = [l for l in lines if '"kind": "attempt"' in l]
        golden = (DATA / "cli_run_golden.jsonl").read_text().splitlines()
        assert record_lines == golden
        header = json.loads(lines[0])
        assert header["benchmark"] == "toybench"
        assert header["tasks"] == {"alpha": 2, "beta": 4}

    def test_run_manifest_written_with_ablation(self, tmp_path):
        _, out_dir = run_fixture_sweep(tmp_path, extra_args=("--ablate", "no-optimizer"))
        manifest = json.loads((out_dir / "run_manifest.json").read_text())
        assert manifest["agent_config"]["optimizer_enabled"] is False
        assert manifest["replicas"] == 1
        assert manifest["benchmark"] == "toybench"
        # The ablated sweep still completes; beta's second attempt now
        # regenerates instead of optimizing.
        log = load_log(out_dir / "replica_000.jsonl")
        beta_phases = [r.phase for r in log.records if r.task_id == "beta"]
        assert beta_phases == ["generate", "generate"]

    def test_missing_config_is_engine_fault(self, tmp_path, capsys):
        code = main(
            [
                "run",
                "--config", str(tmp_path / "missing.json"),
                "--benchmark", str(tmp_path / "missing_bench.json"),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 2
        assert "INVALID" in capsys.readouterr().out

    def test_invalid_benchmark_prints_violations(self, tmp_path, capsys):
        config_path, _ = write_fixture_run_inputs(tmp_path)
        bad = tmp_path / "bad_bench.json"
        bad.write_text(json.dumps({
            "name": "bad",
            "tasks": [{"id": "x", "code": "pass", "tests": []}],
        }))
        code = main(
            ["run", "--config", str(config_path), "--benchmark", str(bad),
             "--out", str(tmp_path / "out2")]
        )
        assert code == 2
        assert "EmptyTestSpec" in capsys.readouterr().out


class TestCmdReport:
    def test_report_over_fixture_run(self, tmp_path, capsys):
        _, out_dir = run_fixture_sweep(tmp_path)
        assert main(["report", str(out_dir)]) == 0
        out = capsys.readouterr().out
        assert "overall" in out and "difficulty=2" in out
        summary = json.loads((out_dir / "summary.json").read_text())
        overall = summary["groups"][-1]
        assert overall["group"] == "overall"
        assert overall["n_tasks"] == 2 and overall["n_exec_ok"] == 2

    def test_group_none_single_row(self, tmp_path, capsys):
        _, out_dir = run_fixture_sweep(tmp_path)
        assert main(["report", str(out_dir), "--group", "none"]) == 0
        table = capsys.readouterr().out
        assert "difficulty=" not in table

    def test_idempotent_output_bytes(self, tmp_path, capsys):
        _, out_dir = run_fixture_sweep(tmp_path)
        capsys.readouterr()  # drain the sweep's own output
        main(["report", str(out_dir)])
        first_table = capsys.readouterr().out
        first_summary = (out_dir / "summary.json").read_bytes()
        main(["report", str(out_dir)])
        assert capsys.readouterr().out == first_table
        assert (out_dir / "summary.json").read_bytes() == first_summary

    def test_empty_dir_errors(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", str(empty)]) != 0


class TestCmdScaling:
    def write_replica_logs(self, tmp_path, outcomes_by_replica):
        from kernelforge.metrics import AttemptRecord, RunLogWriter

        out = tmp_path / "logs"
        out.mkdir()
        for replica, outcomes in enumerate(outcomes_by_replica):
            writer = RunLogWriter(
                out / f"replica_{replica:03d}.jsonl",
                {"benchmark": "b", "replica": replica,
                 "tasks": {t: 1 for t in outcomes}},
            )
            for task_id, ok in outcomes.items():
                writer.write(
                    AttemptRecord(
                        task_id=task_id, replica=replica, iteration=0,
                        phase="generate", strategy_id=0, call_ok=True,
                        tests_passed=ok, speedup=1.0 if ok else None,
                    )
                )
            writer.close()
        return out

    def test_hand_built_two_replica_fixture(self, tmp_path, capsys):
        # Task a solved by 1 of 2 replicas, task b by both:
        # k=1 -> mean(0.5, 1.0) = 0.75; k=2 -> 1.0.
        out = self.write_replica_logs(
            tmp_path, [{"a": True, "b": True}, {"a": False, "b": True}]
        )
        assert main(["scaling", str(out), "--max-k", "2"]) == 0
        csv_lines = (out / "scaling.csv").read_text().splitlines()
        assert csv_lines[0] == "k,call_pass_at_k,exec_pass_at_k"
        assert csv_lines[1] == "1,1.000000,0.750000"
        assert csv_lines[2] == "2,1.000000,1.000000"

    def test_identical_replicas_constant_rows(self, tmp_path, capsys):
        out = self.write_replica_logs(tmp_path, [{"a": True}] * 10)
        assert main(["scaling", str(out), "--max-k", "10"]) == 0
        rows = (out / "scaling.csv").read_text().splitlines()[1:]
        assert all(row.endswith("1.000000,1.000000") for row in rows)

    def test_k_beyond_replica_count_errors(self, tmp_path, capsys):
        out = self.write_replica_logs(tmp_path, [{"a": True}])
        assert main(["scaling", str(out), "--max-k", "3"]) != 0


class TestCmdRetrieve:
    def test_prints_winner_and_score(self, tmp_path, capsys):
        corpus = {
            "entries": [
                {"id": "near", "code": "def f(a, b):\n    return a + b\n"},
                {"id": "far", "code": "class Unrelated:\n    pass\n"},
            ]
        }
        (tmp_path / "corpus.json").write_text(json.dumps(corpus))
        (tmp_path / "query.py").write_text("def f(x, y):\n    return x + y\n")
        assert main(
            ["retrieve", "--query-file", str(tmp_path / "query.py"),
             "--corpus", str(tmp_path / "corpus.json")]
        ) == 0
        out = capsys.readouterr().out.strip()
        name, score = out.split("\t")
        assert name == "near"
        assert 0.0 < float(score) <= 1.0

    def test_exclusion_flag(self, tmp_path, capsys):
        corpus = {"entries": [{"id": "only", "code": "x = 1"}]}
        (tmp_path / "corpus.json").write_text(json.dumps(corpus))
        (tmp_path / "query.py").write_text("x = 1")
        code = main(
            ["retrieve", "--query-file", str(tmp_path / "query.py"),
             "--corpus", str(tmp_path / "corpus.json"), "--exclude", "only"]
        )
        assert code == 1
        assert "no eligible" in capsys.readouterr().out


class TestCmdValidate:
    def test_valid_inputs(self, tmp_path, capsys):
        config_path, benchmark = write_fixture_run_inputs(tmp_path)
        assert main(
            ["validate", "--config", str(config_path), "--benchmark", str(benchmark)]
        ) == 0
        out = capsys.readouterr().out
        assert "ok" in out

    def test_invalid_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"backend": {"kind": "mock"}}))
        assert main(["validate", "--config", str(bad)]) == 2
        assert "MissingTranscript" in capsys.readouterr().out

    def test_nothing_to_validate(self, capsys):
        assert main(["validate"]) == 2

#!/usr/bin/env python3
"""End-to-end demo sweep on scripted mocks: run, report, scaling.

Builds a small benchmark plus per-replica transcripts in which replica r
solves task k_i iff r > i, runs a 6-replica sweep (2 iterations each),
then prints the metric table and the pass@k scaling rows. Everything is
deterministic; no model endpoint or GPU is touched.

Usage:
    python3 scripts/run_mock_sweep.py [--out DIR]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from kernelforge.cli import main as cli  # noqa: E402

N_TASKS = 4
N_REPLICAS = 6
ITERATIONS = 2


def fenced(code: str) -> str:
    return f"```python\n{code}\n```"


def build_fixture(out: Path) -> tuple[Path, Path]:
    kernels = out / "kernels"
    kernels.mkdir(parents=True, exist_ok=True)
    tasks = []
    for i in range(N_TASKS):
        task_id = f"k{i}"
        (kernels / f"{task_id}.py").write_text(
            f"def {task_id}(a, b):\n    return a + b\n"
        )
        tasks.append(
            {
                "id": task_id,
                "instruction": f"Write kernel {task_id} adding two vectors.",
                "code_path": f"kernels/{task_id}.py",
                "difficulty": min(5, i + 1),
                "tests": [{"id": "t0", "seed": 11 + i}, {"id": "t1", "seed": 23 + i}],
            }
        )
    benchmark = out / "benchmark.json"
    benchmark.write_text(json.dumps({"name": "mock-demo", "tasks": tasks}, indent=1))

    replicas = []
    for replica in range(N_REPLICAS):
        responses = []
        for i in range(N_TASKS):
            if replica > i:
                # Solved at iteration 0; iteration 1 optimizes it further.
                responses.append(
                    fenced(f"# mock-latency: cand=2.0 ref={2 + replica}.0\ndef k{i}(a, b): ...")
                )
                responses.append(
                    fenced(f"# mock-latency: cand=1.0 ref={2 + replica}.0\ndef k{i}(a, b): ...")
                )
            else:
                responses.append(fenced("# mock-call-error: HIP launch failure\nx"))
                responses.append(fenced("# mock-fail-tests: all\ndef k(a, b): ..."))
        replicas.append(responses)
    transcript = out / "transcript.json"
    transcript.write_text(json.dumps({"replicas": replicas}))

    config = out / "config.json"
    config.write_text(
        json.dumps(
            {
                "backend": {"kind": "mock", "transcript": "transcript.json"},
                "agent": {"max_iterations": ITERATIONS},
                "executor": {"kind": "mock"},
            },
            indent=1,
        )
    )
    return config, benchmark


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_run", help="working directory")
    args = parser.parse_args()
    out = Path(args.out)
    config, benchmark = build_fixture(out)
    log_dir = out / "logs"

    print(f"== sweep: {N_REPLICAS} replicas x {N_TASKS} tasks x {ITERATIONS} iterations ==")
    status = cli(
        ["run", "--config", str(config), "--benchmark", str(benchmark),
         "--out", str(log_dir), "--replicas", str(N_REPLICAS),
         "--iterations", str(ITERATIONS)]
    )
    if status != 0:
        return status

    print("\n== metrics (per difficulty) ==")
    cli(["report", str(log_dir)])

    print("\n== parallel scaling ==")
    cli(["scaling", str(log_dir), "--max-k", str(N_REPLICAS)])
    return 0


if __name__ == "__main__":
    sys.exit(main())

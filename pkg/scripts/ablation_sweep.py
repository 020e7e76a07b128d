#!/usr/bin/env python3
"""Module-ablation ladder on scripted mocks.

Runs the same fixture benchmark four times -- everything disabled, then
knowledge injection, then +one-shot, then +optimizer -- and prints one
combined row per configuration. Outcomes are scripted per configuration
(mocks cannot feel prompt quality); the point is to demonstrate driving
`--ablate` end to end and collecting comparable rows.

Usage:
    python3 scripts/ablation_sweep.py [--out DIR]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from kernelforge.cli import main as cli  # noqa: E402
from kernelforge.metrics import load_log_dir, report  # noqa: E402

LADDER = [
    ("baseline", ["--ablate", "no-knowledge", "--ablate", "no-one-shot",
                  "--ablate", "no-optimizer"], 1),
    ("+knowledge", ["--ablate", "no-one-shot", "--ablate", "no-optimizer"], 2),
    ("+one-shot", ["--ablate", "no-optimizer"], 3),
    ("+optimizer", [], 4),
]
N_TASKS = 4


def fenced(code: str) -> str:
    return f"```python\n{code}\n```"


def build_fixture(out: Path, solved: int, speedup: float) -> tuple[Path, Path]:
    kernels = out / "kernels"
    kernels.mkdir(parents=True, exist_ok=True)
    tasks = []
    responses = []
    for i in range(N_TASKS):
        task_id = f"k{i}"
        (kernels / f"{task_id}.py").write_text(f"def {task_id}(a, b):\n    return a + b\n")
        tasks.append(
            {
                "id": task_id,
                "instruction": f"kernel {task_id}",
                "code_path": f"kernels/{task_id}.py",
                "tests": [{"id": "t0", "seed": 5 + i}],
            }
        )
        if i < solved:
            responses.append(
                fenced(f"# mock-latency: cand=1.0 ref={speedup}\ndef {task_id}(a, b): ...")
            )
        else:
            responses.append(fenced("# mock-call-error: unsupported intrinsic\nx"))
    benchmark = out / "benchmark.json"
    benchmark.write_text(json.dumps({"name": "ablation-demo", "tasks": tasks}))
    (out / "transcript.json").write_text(json.dumps(responses))
    config = out / "config.json"
    config.write_text(
        json.dumps(
            {
                "backend": {"kind": "mock", "transcript": "transcript.json"},
                "agent": {"max_iterations": 1},
                "executor": {"kind": "mock"},
            }
        )
    )
    return config, benchmark


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="ablation_run")
    args = parser.parse_args()
    root = Path(args.out)

    rows = []
    for step, (label, flags, solved) in enumerate(LADDER):
        out = root / f"step{step}_{label.strip('+')}"
        config, benchmark = build_fixture(out, solved=solved, speedup=1.0 + 0.3 * step)
        log_dir = out / "logs"
        status = cli(
            ["run", "--config", str(config), "--benchmark", str(benchmark),
             "--out", str(log_dir), "--replicas", "1", *flags]
        )
        if status != 0:
            return status
        overall = report(load_log_dir(log_dir), grouping="none").overall()
        rows.append((label, overall))

    print("\nconfiguration  call_acc(%)  exec_acc(%)  mean_speedup")
    for label, overall in rows:
        speedup = "-" if overall.mean_speedup is None else f"{overall.mean_speedup:.2f}"
        print(
            f"{label:<13} {overall.call_accuracy * 100:>11.2f} "
            f"{overall.exec_accuracy * 100:>12.2f}  {speedup:>12}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())

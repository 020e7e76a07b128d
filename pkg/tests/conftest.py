"""Shared fixtures: toy tasks, scripted transcripts, mock directives."""

from __future__ import annotations

import json

import pytest

from kernelforge import KernelTask, MockExecutor, TestCase
from kernelforge.tasks import BenchmarkManifest


def make_task(task_id="vec_add", n_tests=2, difficulty=2, instruction="Add two vectors."):
    tests = tuple(
        TestCase(test_id=f"t{i}", seed=100 + i, rel_tolerance=1e-3, abs_tolerance=1e-3)
        for i in range(n_tests)
    )
    return KernelTask(
        task_id=task_id,
        instruction=instruction,
        reference_code="def vec_add(a, b):\n    return a + b\n",
        test_spec=tests,
        difficulty=difficulty,
    )


def fenced(code: str, prose: str = "") -> str:
    """Wrap code the way a chat model answers: prose then a fenced block."""
    prefix = f"{prose}\n" if prose else ""
    return f"{prefix}```python\n{code}\n```"


def call_error_code(message: str = "RuntimeError: bad kernel launch") -> str:
    return f"# mock-call-error: {message}\ndef kernel(a, b):\n    return a\n"


def fail_tests_code(which: str = "all") -> str:
    return f"# mock-fail-tests: {which}\ndef kernel(a, b):\n    return a - b\n"


def passing_code(cand_ms: float = 1.0, ref_ms: float = 1.0, tag: str = "") -> str:
    return (
        f"# mock-latency: cand={cand_ms} ref={ref_ms}\n"
        f"def kernel(a, b):  # {tag}\n    return a + b\n"
    )


@pytest.fixture
def toy_task():
    return make_task()


@pytest.fixture
def mock_executor():
    return MockExecutor()


def write_benchmark(tmp_path, tasks=None, name="toybench", corpus_entries=None):
    """Write a manifest (and optional corpus) tree under tmp_path."""
    kernels = tmp_path / "kernels"
    kernels.mkdir(exist_ok=True)
    task_docs = []
    for spec in tasks or []:
        code_file = kernels / f"{spec['id']}.py"
        code_file.write_text(spec.get("code", "def kernel(a, b):\n    return a + b\n"))
        doc = {
            "id": spec["id"],
            "instruction": spec.get("instruction", f"implement {spec['id']}"),
            "code_path": f"kernels/{spec['id']}.py",
            "tests": spec.get(
                "tests", [{"id": "t0", "seed": 1}, {"id": "t1", "seed": 2}]
            ),
        }
        if "difficulty" in spec:
            doc["difficulty"] = spec["difficulty"]
        task_docs.append(doc)
    manifest = {"name": name, "tasks": task_docs}
    if corpus_entries is not None:
        corpus_path = tmp_path / "corpus.json"
        corpus_path.write_text(json.dumps({"entries": corpus_entries}))
        manifest["exemplar_corpus_ref"] = "corpus.json"
    path = tmp_path / "benchmark.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def manifest_of(tasks, name="synthetic") -> BenchmarkManifest:
    return BenchmarkManifest(name=name, tasks=tuple(tasks))

"""Benchmark task model: tasks, test cases, and manifest loading.

A benchmark manifest is a single JSON document referencing kernel source
files by relative path, so benchmark suites stay diffable::

    {
      "name": "toybench",
      "exemplar_corpus_ref": "corpus.json",
      "tasks": [
        {
          "id": "vec_add",
          "instruction": "Write a kernel that adds two vectors.",
          "code_path": "kernels/vec_add.py",
          "difficulty": 2,
          "tests": [{"id": "t0", "seed": 7, "rtol": 1e-3, "atol": 1e-3}]
        }
      ]
    }

A task may inline its source under ``"code"`` instead of ``"code_path"``
(used by generated fixtures), and may name the kernel entry point under
``"entry_point"`` (defaults to the task id).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, ValidationError, Violation

DEFAULT_RTOL = 1e-3
DEFAULT_ATOL = 1e-3
DEFAULT_DIFFICULTY = 3

DIFFICULTY_LEVELS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class TestCase:
    """One seeded unit test with tolerance overrides.

    The seed is fixed per test and never randomized at run time, so two
    runs of the same test see bit-identical inputs.
    """

    __test__ = False  # not a pytest class, despite the domain name

    test_id: str
    seed: int
    rel_tolerance: float = DEFAULT_RTOL
    abs_tolerance: float = DEFAULT_ATOL


@dataclass(frozen=True)
class KernelTask:
    """One benchmark entry: what to build, the expert kernel, and its tests."""

    task_id: str
    instruction: str
    reference_code: str
    test_spec: tuple[TestCase, ...]
    difficulty: int = DEFAULT_DIFFICULTY
    tags: tuple[str, ...] = ()
    entry_point: str = ""

    def entry_name(self) -> str:
        return self.entry_point or self.task_id


@dataclass(frozen=True)
class BenchmarkManifest:
    """Immutable, validated collection of tasks plus the 1-shot corpus ref."""

    name: str
    tasks: tuple[KernelTask, ...] = ()
    exemplar_corpus_ref: str = ""

    def task_ids(self) -> frozenset[str]:
        return frozenset(t.task_id for t in self.tasks)

    def difficulty_histogram(self) -> dict[int, int]:
        return dict(Counter(t.difficulty for t in self.tasks))


def validate_task(task: KernelTask) -> list[Violation]:
    """Check every KernelTask invariant; violations are returned, not raised."""
    violations = []
    if not task.task_id:
        violations.append(Violation("EmptyTaskId", "task_id must be non-empty"))
    if task.difficulty not in DIFFICULTY_LEVELS:
        violations.append(
            Violation(
                "InvalidDifficulty",
                f"task {task.task_id!r}: difficulty {task.difficulty} not in 1..5",
            )
        )
    if not task.test_spec:
        violations.append(
            Violation("EmptyTestSpec", f"task {task.task_id!r} has zero tests")
        )
    seen = set()
    for test in task.test_spec:
        if test.test_id in seen:
            violations.append(
                Violation(
                    "DuplicateTestId",
                    f"task {task.task_id!r}: duplicate test id {test.test_id!r}",
                )
            )
        seen.add(test.test_id)
        if test.rel_tolerance < 0 or test.abs_tolerance < 0:
            violations.append(
                Violation(
                    "NegativeTolerance",
                    f"task {task.task_id!r} test {test.test_id!r}: tolerances must be >= 0",
                )
            )
        if test.seed < 0:
            violations.append(
                Violation(
                    "NegativeSeed",
                    f"task {task.task_id!r} test {test.test_id!r}: seed must be unsigned",
                )
            )
    return violations


def _parse_test(raw: dict, task_id: str) -> TestCase:
    try:
        return TestCase(
            test_id=str(raw["id"]),
            seed=int(raw["seed"]),
            rel_tolerance=float(raw.get("rtol", DEFAULT_RTOL)),
            abs_tolerance=float(raw.get("atol", DEFAULT_ATOL)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"task {task_id!r}: malformed test entry: {exc}") from exc


def _parse_task(raw: dict, base_dir: Path) -> KernelTask:
    task_id = str(raw.get("id", ""))
    if not task_id:
        raise ParseError("task entry missing 'id'")
    if "code" in raw:
        code = str(raw["code"])
    elif "code_path" in raw:
        code_path = base_dir / str(raw["code_path"])
        try:
            code = code_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"task {task_id!r}: cannot read {code_path}: {exc}") from exc
    else:
        raise ParseError(f"task {task_id!r}: needs 'code' or 'code_path'")
    try:
        difficulty = int(raw.get("difficulty", DEFAULT_DIFFICULTY))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"task {task_id!r}: malformed difficulty: {exc}") from exc
    tests = tuple(_parse_test(t, task_id) for t in raw.get("tests", []))
    return KernelTask(
        task_id=task_id,
        instruction=str(raw.get("instruction", "")),
        reference_code=code,
        test_spec=tests,
        difficulty=difficulty,
        tags=tuple(str(t) for t in raw.get("tags", [])),
        entry_point=str(raw.get("entry_point", "")),
    )


def _corpus_entry_ids(path: Path) -> frozenset[str]:
    # Only ids are needed for the overlap check; full corpus loading lives
    # in kernelforge.retrieval.
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read exemplar corpus {path}: {exc}") from exc
    entries = doc.get("entries", []) if isinstance(doc, dict) else []
    return frozenset(str(e.get("id", "")) for e in entries)


def load_manifest(path: str | Path) -> BenchmarkManifest:
    """Load and validate a benchmark manifest.

    Raises ParseError for malformed files and ValidationError (naming the
    offending task ids) for duplicate ids, empty test specs, invalid
    difficulties, or overlap with the exemplar corpus.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or "name" not in doc:
        raise ParseError(f"manifest {path} is not an object with a 'name' field")

    base_dir = path.parent
    tasks = tuple(_parse_task(raw, base_dir) for raw in doc.get("tasks", []))
    manifest = BenchmarkManifest(
        name=str(doc["name"]),
        tasks=tasks,
        exemplar_corpus_ref=str(doc.get("exemplar_corpus_ref", "") or ""),
    )

    violations = []
    seen_ids: set[str] = set()
    for task in manifest.tasks:
        if task.task_id in seen_ids:
            violations.append(
                Violation("DuplicateTaskId", f"duplicate task id {task.task_id!r}")
            )
        seen_ids.add(task.task_id)
        violations.extend(validate_task(task))

    if manifest.exemplar_corpus_ref:
        corpus_ids = _corpus_entry_ids(base_dir / manifest.exemplar_corpus_ref)
        for clash in sorted(corpus_ids & manifest.task_ids()):
            violations.append(
                Violation(
                    "CorpusOverlap",
                    f"exemplar corpus entry {clash!r} collides with a benchmark task id",
                )
            )

    if violations:
        raise ValidationError(violations)
    return manifest


def manifest_to_dict(manifest: BenchmarkManifest) -> dict:
    """Serialize a manifest with inline code (round-trips through load)."""
    return {
        "name": manifest.name,
        "exemplar_corpus_ref": manifest.exemplar_corpus_ref,
        "tasks": [
            {
                "id": t.task_id,
                "instruction": t.instruction,
                "code": t.reference_code,
                "difficulty": t.difficulty,
                "tags": list(t.tags),
                "entry_point": t.entry_point,
                "tests": [
                    {
                        "id": c.test_id,
                        "seed": c.seed,
                        "rtol": c.rel_tolerance,
                        "atol": c.abs_tolerance,
                    }
                    for c in t.test_spec
                ],
            }
            for t in manifest.tasks
        ],
    }


def save_manifest(manifest: BenchmarkManifest, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(manifest_to_dict(manifest), indent=2) + "\n", encoding="utf-8"
    )

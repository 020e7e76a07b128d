"""Task model: manifest loading, validation, round-trips."""

from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kernelforge import KernelTask, TestCase, load_manifest, save_manifest, validate_task
from kernelforge.errors import ParseError, ValidationError
from tests.conftest import make_task, write_benchmark


def test_load_simple_manifest(tmp_path):
    path = write_benchmark(
        tmp_path,
        tasks=[{"id": "vec_add", "difficulty": 2}, {"id": "softmax", "difficulty": 4}],
    )
    manifest = load_manifest(path)
    assert manifest.name == "toybench"
    assert manifest.task_ids() == {"vec_add", "softmax"}
    assert manifest.tasks[0].reference_code.startswith("def kernel")
    assert manifest.tasks[0].test_spec[0].seed == 1


def test_empty_task_list_is_valid(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"name": "empty", "tasks": []}))
    manifest = load_manifest(path)
    assert manifest.tasks == ()


def test_difficulty_histogram_matches_manifest(tmp_path):
    counts = {1: 3, 2: 27, 3: 65, 4: 84, 5: 5}
    tasks = []
    for level, n in counts.items():
        tasks.extend({"id": f"d{level}_t{i}", "difficulty": level} for i in range(n))
    path = write_benchmark(tmp_path, tasks=tasks)
    manifest = load_manifest(path)
    assert len(manifest.tasks) == 184
    assert manifest.difficulty_histogram() == counts
    assert sum(manifest.difficulty_histogram().values()) == len(manifest.tasks)


def test_duplicate_task_id_names_offender(tmp_path):
    path = write_benchmark(tmp_path, tasks=[{"id": "dup"}, {"id": "dup"}])
    with pytest.raises(ValidationError) as excinfo:
        load_manifest(path)
    assert any(v.code == "DuplicateTaskId" and "dup" in v.message
               for v in excinfo.value.violations)


def test_empty_test_spec_rejected(tmp_path):
    path = write_benchmark(tmp_path, tasks=[{"id": "untested", "tests": []}])
    with pytest.raises(ValidationError) as excinfo:
        load_manifest(path)
    assert any(v.code == "EmptyTestSpec" and "untested" in v.message
               for v in excinfo.value.violations)


def test_corpus_overlap_rejected(tmp_path):
    path = write_benchmark(
        tmp_path,
        tasks=[{"id": "vec_add"}],
        corpus_entries=[{"id": "vec_add", "code": "def kernel(): pass"}],
    )
    with pytest.raises(ValidationError) as excinfo:
        load_manifest(path)
    assert any(v.code == "CorpusOverlap" and "vec_add" in v.message
               for v in excinfo.value.violations)


def test_disjoint_corpus_accepted(tmp_path):
    path = write_benchmark(
        tmp_path,
        tasks=[{"id": "vec_add"}],
        corpus_entries=[{"id": "other", "code": "def kernel(): pass"}],
    )
    manifest = load_manifest(path)
    assert manifest.exemplar_corpus_ref == "corpus.json"


def test_malformed_file_is_parse_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_manifest(path)
    missing = tmp_path / "nope.json"
    with pytest.raises(ParseError):
        load_manifest(missing)


def test_difficulty_defaults_to_three(tmp_path):
    path = write_benchmark(tmp_path, tasks=[{"id": "plain"}])
    manifest = load_manifest(path)
    assert manifest.tasks[0].difficulty == 3


def test_tolerances_default(tmp_path):
    path = write_benchmark(
        tmp_path, tasks=[{"id": "t", "tests": [{"id": "t0", "seed": 1}]}]
    )
    test = load_manifest(path).tasks[0].test_spec[0]
    assert test.rel_tolerance == pytest.approx(1e-3)
    assert test.abs_tolerance == pytest.approx(1e-3)


def test_deterministic_load(tmp_path):
    path = write_benchmark(tmp_path, tasks=[{"id": "a"}, {"id": "b", "difficulty": 5}])
    assert load_manifest(path) == load_manifest(path)


def test_round_trip(tmp_path):
    path = write_benchmark(tmp_path, tasks=[{"id": "a", "difficulty": 4}, {"id": "b"}])
    manifest = load_manifest(path)
    out = tmp_path / "roundtrip.json"
    save_manifest(manifest, out)
    assert load_manifest(out) == manifest


def test_validate_task_well_formed():
    assert validate_task(make_task()) == []


def test_validate_task_invalid_difficulty():
    task = make_task()
    bad = KernelTask(
        task_id=task.task_id,
        instruction=task.instruction,
        reference_code=task.reference_code,
        test_spec=task.test_spec,
        difficulty=0,
    )
    codes = [v.code for v in validate_task(bad)]
    assert codes == ["InvalidDifficulty"]


def test_validate_task_empty_test_spec():
    bad = KernelTask(
        task_id="x", instruction="", reference_code="pass", test_spec=(), difficulty=1
    )
    codes = [v.code for v in validate_task(bad)]
    assert codes == ["EmptyTestSpec"]


def test_validate_task_negative_tolerance():
    bad = KernelTask(
        task_id="x",
        instruction="",
        reference_code="pass",
        test_spec=(TestCase(test_id="t0", seed=1, rel_tolerance=-1.0),),
        difficulty=1,
    )
    assert any(v.code == "NegativeTolerance" for v in validate_task(bad))


@given(
    st.lists(
        st.tuples(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=20)),
        min_size=0,
        max_size=5,
    )
)
def test_histogram_totals(level_counts):
    tasks = []
    for idx, (level, n) in enumerate(level_counts):
        for i in range(n):
            tasks.append(make_task(task_id=f"g{idx}_t{i}", difficulty=level))
    from tests.conftest import manifest_of

    manifest = manifest_of(tasks)
    histogram = manifest.difficulty_histogram()
    assert sum(histogram.values()) == len(manifest.tasks)

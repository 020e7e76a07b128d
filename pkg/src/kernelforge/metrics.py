"""Run logs, accuracy/speedup metrics, pass@k, and parallel scaling.

A run log is line-delimited JSON: one header line describing the sweep,
one record per attempt (flushed as it happens, so a crash loses at most
one record), and an optional footer. Metrics are computed over immutable
logs; replicas are merged order-insensitively.

Metric definitions:

- call accuracy: fraction of tasks whose selected attempt compiled and
  ran without errors.
- execution accuracy: fraction of tasks whose selected attempt passed
  every unit test (by default over the full benchmark denominator; a flag
  switches to the call-ok-only conditional variant).
- speedup: mean over unit tests of median reference latency divided by
  candidate latency, defined only for fully correct kernels.
- pass@k: unbiased estimator 1 - C(n-c, k)/C(n, k), computed in product
  form so large n stays stable.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from .errors import (
    DomainError,
    EmptyLogError,
    MismatchedReplicasError,
    NotExecOkError,
    ParseError,
)
from .executor import ExecutionReport, Executor, TimingConfig
from .gateway import Backend, BackendConfig
from .loop import AgentConfig, CandidateAttempt, failure_summary, mean_speedup_of, run_task
from .retrieval import CorpusEntry
from .tasks import BenchmarkManifest

RECORD_ORDER = ("task_id", "replica", "iteration")


@dataclass(frozen=True)
class AttemptRecord:
    """One log line: the durable facts about a single attempt."""

    task_id: str
    replica: int
    iteration: int
    phase: str
    strategy_id: int
    call_ok: bool
    tests_passed: bool
    speedup: float | None = None
    trace_digest: str = ""

    def sort_key(self):
        return (self.task_id, self.replica, self.iteration)


@dataclass
class RunLog:
    """Header plus attempt records for one replica (or a merged view)."""

    header: dict = field(default_factory=dict)
    records: list[AttemptRecord] = field(default_factory=list)
    failure: str = ""

    def sort_records(self) -> None:
        self.records.sort(key=AttemptRecord.sort_key)

    def task_ids(self) -> frozenset[str]:
        ids = set(self.header.get("tasks", {}).keys())
        ids.update(r.task_id for r in self.records)
        return frozenset(ids)

    def difficulty_of(self, task_id: str) -> int:
        return int(self.header.get("tasks", {}).get(task_id, 3))


def trace_digest(trace: str) -> str:
    return hashlib.sha256(trace.encode("utf-8")).hexdigest()[:12] if trace else ""


def attempt_record_from(attempt: CandidateAttempt, replica: int = 0) -> AttemptRecord:
    """Project a full CandidateAttempt down to its log record."""
    report = attempt.report
    exec_ok = attempt.exec_ok()
    return AttemptRecord(
        task_id=attempt.task_id,
        replica=replica,
        iteration=attempt.iteration_index,
        phase=attempt.phase,
        strategy_id=attempt.strategy_id,
        call_ok=attempt.call_ok(),
        tests_passed=exec_ok,
        speedup=mean_speedup_of(report) if exec_ok and report is not None else None,
        trace_digest=trace_digest("" if exec_ok else failure_summary(report)),
    )


def record_to_dict(record: AttemptRecord) -> dict:
    doc = {"kind": "attempt"}
    doc.update(asdict(record))
    return doc


def record_from_dict(doc: dict) -> AttemptRecord:
    try:
        return AttemptRecord(
            task_id=str(doc["task_id"]),
            replica=int(doc["replica"]),
            iteration=int(doc["iteration"]),
            phase=str(doc["phase"]),
            strategy_id=int(doc["strategy_id"]),
            call_ok=bool(doc["call_ok"]),
            tests_passed=bool(doc["tests_passed"]),
            speedup=None if doc.get("speedup") is None else float(doc["speedup"]),
            trace_digest=str(doc.get("trace_digest", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed attempt record: {exc}") from exc


class RunLogWriter:
    """Append-only log file: header first, one flushed line per attempt."""

    def __init__(self, path: str | Path, header: dict):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8")
        self._write_line({"kind": "header", **header})

    def _write_line(self, doc: dict) -> None:
        self._fh.write(json.dumps(doc, sort_keys=True) + "\n")
        self._fh.flush()

    def write(self, record: AttemptRecord) -> None:
        self._write_line(record_to_dict(record))

    def close(self, failure: str = "", finished_at: str = "") -> None:
        self._write_line({"kind": "footer", "failure": failure, "finished_at": finished_at})
        self._fh.close()


def load_log(path: str | Path) -> RunLog:
    """Parse one log file; unknown record kinds are skipped for forward compat."""
    log = RunLog()
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read log {path}: {exc}") from exc
    for line in lines:
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed log line in {path}: {exc}") from exc
        kind = doc.get("kind")
        if kind == "header":
            log.header = {k: v for k, v in doc.items() if k != "kind"}
        elif kind == "attempt":
            log.records.append(record_from_dict(doc))
        elif kind == "footer":
            log.failure = str(doc.get("failure", ""))
    log.sort_records()
    return log


def load_log_dir(log_dir: str | Path) -> list[RunLog]:
    paths = sorted(Path(log_dir).glob("replica_*.jsonl"))
    if not paths:
        raise EmptyLogError(f"no replica_*.jsonl logs under {log_dir}")
    return [load_log(p) for p in paths]


def merge_logs(logs: Sequence[RunLog]) -> RunLog:
    """Union of replica logs; record order is canonical, so merging is
    insensitive to the order replicas are given in."""
    merged = RunLog()
    tasks: dict[str, int] = {}
    for log in logs:
        tasks.update(log.header.get("tasks", {}))
        merged.records.extend(log.records)
    if logs:
        merged.header = dict(logs[0].header)
    merged.header["tasks"] = tasks
    merged.sort_records()
    return merged


Selector = Callable[[list[AttemptRecord]], AttemptRecord]


def best_attempt(records: list[AttemptRecord]) -> AttemptRecord:
    """The task's best attempt: exec-ok beats call-ok beats neither; among
    exec-ok attempts the highest speedup wins; remaining ties go to the
    earliest (replica, iteration)."""

    def key(record: AttemptRecord):
        speedup = record.speedup if record.speedup is not None else float("-inf")
        return (record.tests_passed, record.call_ok, speedup,
                -record.replica, -record.iteration)

    return max(records, key=key)


def _selected_by_task(log: RunLog, selector: Selector | None) -> dict[str, AttemptRecord]:
    if not log.records:
        raise EmptyLogError("log has no attempt records")
    selector = selector or best_attempt
    by_task: dict[str, list[AttemptRecord]] = {}
    for record in log.records:
        by_task.setdefault(record.task_id, []).append(record)
    return {task: selector(records) for task, records in sorted(by_task.items())}


def call_accuracy(log: RunLog, selector: Selector | None = None) -> float:
    """Fraction of tasks whose selected attempt compiled and ran cleanly."""
    selected = _selected_by_task(log, selector)
    return sum(1 for r in selected.values() if r.call_ok) / len(selected)


def exec_accuracy(log: RunLog, selector: Selector | None = None) -> float:
    """Fraction of tasks whose selected attempt passed every unit test."""
    selected = _selected_by_task(log, selector)
    return sum(1 for r in selected.values() if r.tests_passed) / len(selected)


def kernel_speedup(report: ExecutionReport) -> float:
    """Mean over unit tests of reference/candidate median latency.

    Defined only for fully correct kernels; anything less raises
    NotExecOkError.
    """
    if not report.all_tests_passed():
        raise NotExecOkError("speedup is defined only when every test passed")
    return mean_speedup_of(report)


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k: 1 - C(n-c, k)/C(n, k), in stable product form.

    The ratio is accumulated as prod_{i<k} (n-c-i)/(n-i), which avoids
    factorial overflow for any realistic n.
    """
    if n < 1 or not 0 <= c <= n or not 1 <= k <= n:
        raise DomainError(f"pass@k domain violated: n={n} c={c} k={k}")
    prod = 1.0
    for i in range(k):
        numerator = n - c - i
        if numerator <= 0:
            return 1.0
        prod *= numerator / (n - i)
    return 1.0 - prod


@dataclass(frozen=True)
class ScalingPoint:
    """One row of a parallel-scaling table."""

    k: int
    call_pass_at_k: float
    exec_pass_at_k: float


def scaling_table(logs: Sequence[RunLog], max_k: int) -> list[ScalingPoint]:
    """pass@1..max_k over per-replica outcomes, averaged across tasks.

    A replica counts as solving a task when its best attempt for that task
    (after sequential refinement) is call-ok / exec-ok. All replicas must
    cover the same benchmark, and there must be at least max_k of them.
    """
    n = len(logs)
    if n == 0 or max_k < 1:
        raise MismatchedReplicasError("need at least one replica and max_k >= 1")
    if max_k > n:
        raise MismatchedReplicasError(f"max_k={max_k} exceeds replica count {n}")
    task_sets = [log.task_ids() for log in logs]
    if any(s != task_sets[0] for s in task_sets[1:]):
        raise MismatchedReplicasError("replicas cover different task sets")
    benchmarks = {log.header.get("benchmark", "") for log in logs}
    if len(benchmarks) > 1:
        raise MismatchedReplicasError(f"replicas ran different benchmarks: {benchmarks}")

    tasks = sorted(task_sets[0])
    call_counts = {t: 0 for t in tasks}
    exec_counts = {t: 0 for t in tasks}
    for log in logs:
        for task, record in _selected_by_task(log, best_attempt).items():
            if record.call_ok:
                call_counts[task] += 1
            if record.tests_passed:
                exec_counts[task] += 1

    points = []
    for k in range(1, max_k + 1):
        call_mean = sum(pass_at_k(n, call_counts[t], k) for t in tasks) / len(tasks)
        exec_mean = sum(pass_at_k(n, exec_counts[t], k) for t in tasks) / len(tasks)
        points.append(ScalingPoint(k=k, call_pass_at_k=call_mean, exec_pass_at_k=exec_mean))
    return points


@dataclass(frozen=True)
class GroupMetrics:
    """Aggregates for one task group (overall or one difficulty level)."""

    group: str
    n_tasks: int
    n_call_ok: int
    n_exec_ok: int
    call_accuracy: float
    exec_accuracy: float
    mean_speedup: float | None


@dataclass
class MetricsSummary:
    """Per-group metric rows; difficulty rows first, overall row last."""

    groups: list[GroupMetrics] = field(default_factory=list)

    def overall(self) -> GroupMetrics:
        return self.groups[-1]

    def to_dict(self) -> dict:
        return {"groups": [asdict(g) for g in self.groups]}


def _group_metrics(
    name: str,
    selected: dict[str, AttemptRecord],
    conditional_exec: bool,
) -> GroupMetrics:
    n_tasks = len(selected)
    n_call = sum(1 for r in selected.values() if r.call_ok)
    n_exec = sum(1 for r in selected.values() if r.tests_passed)
    speedups = [r.speedup for r in selected.values() if r.tests_passed and r.speedup is not None]
    exec_denominator = n_call if conditional_exec else n_tasks
    return GroupMetrics(
        group=name,
        n_tasks=n_tasks,
        n_call_ok=n_call,
        n_exec_ok=n_exec,
        call_accuracy=n_call / n_tasks if n_tasks else 0.0,
        exec_accuracy=n_exec / exec_denominator if exec_denominator else 0.0,
        mean_speedup=sum(speedups) / len(speedups) if speedups else None,
    )


def report(
    logs: Sequence[RunLog],
    grouping: str = "difficulty",
    selector: Selector | None = None,
    conditional_exec: bool = False,
) -> MetricsSummary:
    """Aggregate one or more replica logs into metric rows.

    grouping="difficulty" emits one row per difficulty level plus an
    overall row; grouping="none" emits the overall row only. The default
    execution-accuracy denominator is the full task set;
    conditional_exec=True restricts it to call-ok tasks.
    """
    if not logs:
        raise EmptyLogError("no logs supplied")
    merged = merge_logs(logs)
    selected = _selected_by_task(merged, selector)

    summary = MetricsSummary()
    if grouping == "difficulty":
        by_level: dict[int, dict[str, AttemptRecord]] = {}
        for task, record in selected.items():
            by_level.setdefault(merged.difficulty_of(task), {})[task] = record
        for level in sorted(by_level):
            summary.groups.append(
                _group_metrics(f"difficulty={level}", by_level[level], conditional_exec)
            )
    summary.groups.append(_group_metrics("overall", selected, conditional_exec))

    if not conditional_exec:
        for group in summary.groups:
            assert group.exec_accuracy <= group.call_accuracy + 1e-12, (
                "cascade violated: exec accuracy exceeds call accuracy"
            )
    return summary


def render_summary_table(summary: MetricsSummary) -> str:
    """Fixed-width text table, stable byte-for-byte for identical inputs."""
    headers = ("group", "tasks", "call_ok", "exec_ok", "call_acc(%)", "exec_acc(%)", "speedup")
    rows = [headers]
    for g in summary.groups:
        rows.append(
            (
                g.group,
                str(g.n_tasks),
                str(g.n_call_ok),
                str(g.n_exec_ok),
                f"{g.call_accuracy * 100:.2f}",
                f"{g.exec_accuracy * 100:.2f}",
                "-" if g.mean_speedup is None else f"{g.mean_speedup:.2f}",
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(headers))))
    return "\n".join(lines) + "\n"


def render_scaling_table(points: Sequence[ScalingPoint]) -> str:
    lines = ["k  call_pass_at_k(%)  exec_pass_at_k(%)"]
    for p in points:
        lines.append(f"{p.k:<2} {p.call_pass_at_k * 100:>17.2f} {p.exec_pass_at_k * 100:>18.2f}")
    return "\n".join(lines) + "\n"


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_log_header(
    manifest: BenchmarkManifest,
    agent_config: AgentConfig,
    backend_config: BackendConfig,
    replica: int,
    engine_version: str,
    started_at: str = "",
) -> dict:
    return {
        "benchmark": manifest.name,
        "replica": replica,
        "backend": backend_config.model_name,
        "temperature": backend_config.temperature,
        "agent_config": asdict(agent_config),
        "tasks": {t.task_id: t.difficulty for t in manifest.tasks},
        "engine_version": engine_version,
        "started_at": started_at,
    }


def run_replica(
    manifest: BenchmarkManifest,
    agent_config: AgentConfig,
    backend: Backend,
    executor: Executor,
    replica: int = 0,
    corpus: list[CorpusEntry] | None = None,
    knowledge: str | None = None,
    backend_config: BackendConfig = BackendConfig(),
    timing: TimingConfig = TimingConfig(),
    timeout: float = 120.0,
    out_path: str | Path | None = None,
    engine_version: str = "0",
    clock: Callable[[], str] | None = None,
) -> RunLog:
    """One full sequential sweep over the benchmark with a single backend."""
    clock = clock or utc_now_iso
    header = build_log_header(
        manifest, agent_config, backend_config, replica, engine_version, started_at=clock()
    )
    log = RunLog(header=header)
    writer = RunLogWriter(out_path, header) if out_path else None
    exclude = manifest.task_ids()

    def sink(attempt: CandidateAttempt) -> None:
        record = attempt_record_from(attempt, replica)
        log.records.append(record)
        if writer is not None:
            writer.write(record)

    failure = ""
    try:
        for task in manifest.tasks:
            attempt_log = run_task(
                task,
                agent_config,
                backend,
                executor,
                corpus=corpus,
                knowledge=knowledge,
                backend_config=backend_config,
                timing=timing,
                timeout=timeout,
                exclude_ids=exclude,
                replica=replica,
                on_attempt=sink,
            )
            if attempt_log.aborted:
                failure = attempt_log.aborted
                break
    finally:
        if writer is not None:
            writer.close(failure=failure, finished_at=clock())
    log.failure = failure
    log.sort_records()
    return log


def run_parallel(
    manifest: BenchmarkManifest,
    agent_config: AgentConfig,
    backend_factory: Callable[[int], Backend],
    executor: Executor,
    replicas: int,
    corpus: list[CorpusEntry] | None = None,
    knowledge: str | None = None,
    backend_config: BackendConfig = BackendConfig(),
    timing: TimingConfig = TimingConfig(),
    timeout: float = 120.0,
    out_dir: str | Path | None = None,
    max_workers: int | None = None,
    engine_version: str = "0",
    clock: Callable[[], str] | None = None,
) -> list[RunLog]:
    """Launch independent replicas of the benchmark sweep.

    Replicas share nothing mutable: each gets its own backend from the
    factory and its own log (file). A replica that fails is marked in its
    log's failure field without cancelling its siblings.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    out = Path(out_dir) if out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    def one(replica: int) -> RunLog:
        path = out / f"replica_{replica:03d}.jsonl" if out is not None else None
        try:
            return run_replica(
                manifest,
                agent_config,
                backend_factory(replica),
                executor,
                replica=replica,
                corpus=corpus,
                knowledge=knowledge,
                backend_config=backend_config,
                timing=timing,
                timeout=timeout,
                out_path=path,
                engine_version=engine_version,
                clock=clock,
            )
        except Exception as exc:  # noqa: BLE001 - replica isolation contract
            failed = RunLog(
                header=build_log_header(
                    manifest, agent_config, backend_config, replica, engine_version
                ),
                failure=f"replica failed: {exc}",
            )
            return failed

    workers = min(replicas, max_workers) if max_workers else replicas
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(replicas)))

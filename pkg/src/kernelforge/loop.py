"""Per-task agent state machine: generate, evaluate, reflect, optimize.

One run_task call drives a single task through up to max_iterations
attempts. Evaluation is cascaded: the functionality test runs first, and
only fully correct candidates get timed and admitted to the optimization
history. Failures feed their error trace back into a reflection prompt;
when a strategy keeps failing max_perf_debug_num times in a row, the
current approach is discarded wholesale (reflections cleared, strategy id
bumped) and generation starts fresh -- the escape hatch from the
debugging trap.

With a scripted mock backend and the mock executor, a run is fully
deterministic and replayable byte for byte.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from typing import Callable

from . import gateway
from .errors import (
    AuthError,
    BackendTimeoutError,
    ExecutorUnavailableError,
    TransportError,
    ValidationError,
    Violation,
)
from .executor import (
    DEFAULT_TIMEOUT,
    ExecutionReport,
    Executor,
    TimingConfig,
    build_request,
    normalize_report,
)
from .gateway import Backend, BackendConfig
from .retrieval import CorpusEntry, retrieval_query, retrieve_top1
from .tasks import KernelTask

logger = logging.getLogger(__name__)

PHASE_GENERATE = "generate"
PHASE_REFLECT = "reflect"
PHASE_OPTIMIZE = "optimize"

NO_CODE_TRACE = "no code block in response"


@dataclass(frozen=True)
class AgentConfig:
    """Budgets and ablation switches for one agent run.

    The three feature flags (knowledge, one-shot, optimizer) are the
    ablation axes; disabling the optimizer falls back to fresh generation
    after a correct candidate exists.
    """

    max_iterations: int = 10
    max_perf_debug_num: int = 3
    reflection_window: int = 3
    optimizer_enabled: bool = True
    one_shot_enabled: bool = True
    knowledge_enabled: bool = True

    def validate(self) -> list[Violation]:
        violations = []
        if self.max_iterations < 1:
            violations.append(Violation("NonPositiveIterations", "max_iterations must be >= 1"))
        if self.max_perf_debug_num < 1:
            violations.append(
                Violation("NonPositiveDebugLimit", "max_perf_debug_num must be >= 1")
            )
        if self.reflection_window < 1:
            violations.append(
                Violation("NonPositiveWindow", "reflection_window must be >= 1")
            )
        return violations


@dataclass(frozen=True)
class PerfEntry:
    """One functionally correct candidate with its measured speedup."""

    code: str
    speedup: float
    tests_passed: bool = True


class PerfHistory:
    """Correct candidates kept sorted ascending by speedup (best last)."""

    def __init__(self):
        self.entries: list[PerfEntry] = []

    def insert(self, entry: PerfEntry) -> None:
        keys = [e.speedup for e in self.entries]
        self.entries.insert(bisect.bisect_right(keys, entry.speedup), entry)

    def best(self) -> PerfEntry | None:
        return self.entries[-1] if self.entries else None

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class AgentMemory:
    """What the agent remembers about one task while iterating on it."""

    reflections: list[tuple[str, str]] = field(default_factory=list)
    perf_history: PerfHistory = field(default_factory=PerfHistory)
    best_correct: tuple[str, float] | None = None

    def record_correct(self, code: str, speedup: float) -> None:
        self.perf_history.insert(PerfEntry(code=code, speedup=speedup))
        if self.best_correct is None or speedup > self.best_correct[1]:
            self.best_correct = (code, speedup)


@dataclass
class CandidateAttempt:
    """One generated kernel with provenance and its execution outcome."""

    attempt_id: str
    task_id: str
    iteration_index: int
    phase: str
    strategy_id: int
    code: str
    report: ExecutionReport | None
    prompt_fingerprint: str

    def call_ok(self) -> bool:
        return self.report is not None and self.report.call_ok

    def exec_ok(self) -> bool:
        return self.report is not None and self.report.all_tests_passed()


@dataclass
class AttemptLog:
    """Every attempt for one task, in order, plus the final memory."""

    task_id: str
    attempts: list[CandidateAttempt] = field(default_factory=list)
    memory: AgentMemory = field(default_factory=AgentMemory)
    aborted: str = ""


def should_reset_strategy(consecutive_debug_failures: int, config: AgentConfig) -> bool:
    """True once the consecutive-failure count hits the debugging-trap cap."""
    if consecutive_debug_failures < 0:
        raise ValueError("failure counter must be >= 0")
    return consecutive_debug_failures >= config.max_perf_debug_num


def mean_speedup_of(report: ExecutionReport) -> float:
    """Mean over tests of reference/candidate latency (all tests passed)."""
    ratios = [
        r.reference_latency_ms / r.candidate_latency_ms
        for r in report.test_results
        if r.candidate_latency_ms and r.reference_latency_ms
    ]
    return sum(ratios) / len(ratios) if ratios else 0.0


def failure_summary(report: ExecutionReport | None) -> str:
    """Deterministic trace text handed to the reflector for a failed attempt."""
    if report is None:
        return NO_CODE_TRACE
    if report.timed_out:
        return report.error_trace or "execution timed out"
    if not report.call_ok:
        return report.error_trace or "candidate failed to compile or run"
    failing = [r for r in report.test_results if not r.passed]
    if failing:
        details = "; ".join(f"{r.test_id} (max_abs_err={r.max_abs_err:g})" for r in failing)
        return f"failed tests: {details}"
    return ""


def evaluate_cascaded(
    code: str,
    task: KernelTask,
    executor: Executor,
    timing: TimingConfig = TimingConfig(),
    timeout: float = DEFAULT_TIMEOUT,
) -> ExecutionReport:
    """Run the evaluator cascade for one candidate.

    Functionality first: a failed call yields no test results and no
    latencies. Only when every test passes does the report carry per-test
    latencies for both candidate and reference.
    """
    if not code:
        raise ValueError("candidate code must be non-empty")
    request = build_request(code, task, timing=timing, timeout=timeout)
    return normalize_report(executor.run(request))


def run_task(
    task: KernelTask,
    config: AgentConfig,
    backend: Backend,
    executor: Executor,
    corpus: list[CorpusEntry] | None = None,
    knowledge: str | None = None,
    backend_config: BackendConfig = BackendConfig(),
    timing: TimingConfig = TimingConfig(),
    timeout: float = DEFAULT_TIMEOUT,
    exclude_ids: frozenset[str] = frozenset(),
    replica: int = 0,
    on_attempt: Callable[[CandidateAttempt], None] | None = None,
) -> AttemptLog:
    """Drive the full state machine for one task.

    Returns every attempt in order plus the final memory. Backend
    exhaustion or an unreachable executor stops the loop early; the log
    still carries the attempts completed so far, with `aborted` naming the
    reason.
    """
    violations = config.validate()
    if violations:
        raise ValidationError(violations)

    log = AttemptLog(task_id=task.task_id)
    memory = log.memory

    exemplar: CorpusEntry | None = None
    if config.one_shot_enabled and corpus:
        query = retrieval_query(task.reference_code, task.instruction, task.task_id)
        exemplar = retrieve_top1(query, corpus, exclude=exclude_ids | {task.task_id})
    knowledge_text = knowledge if config.knowledge_enabled else None

    strategy_id = 0
    consecutive_failures = 0
    last_failure: tuple[str, str] | None = None
    fresh_strategy = False

    for iteration in range(config.max_iterations):
        if memory.best_correct is not None and config.optimizer_enabled:
            phase = PHASE_OPTIMIZE
            bundle = gateway.assemble_optimization_prompt(task, memory.perf_history)
        elif last_failure is not None:
            phase = PHASE_REFLECT
            bundle = gateway.assemble_reflection_prompt(
                task,
                last_failure[0],
                last_failure[1],
                memory,
                window=config.reflection_window,
            )
            memory.reflections.append(last_failure)
        else:
            phase = PHASE_GENERATE
            bundle = gateway.assemble_generation_prompt(
                task, exemplar, knowledge_text, fresh_strategy=fresh_strategy
            )
        fresh_strategy = False

        try:
            response = gateway.complete(bundle, backend_config, backend)
        except (TransportError, BackendTimeoutError, AuthError) as exc:
            logger.warning("task %s: backend exhausted at iteration %d: %s",
                           task.task_id, iteration, exc)
            log.aborted = "backend_exhausted"
            break

        code = response.extracted_code
        report: ExecutionReport | None = None
        if code:
            try:
                report = evaluate_cascaded(
                    code, task, executor, timing=timing, timeout=timeout
                )
            except ExecutorUnavailableError as exc:
                logger.warning("task %s: executor unavailable: %s", task.task_id, exc)
                log.aborted = "executor_unavailable"
                break

        attempt = CandidateAttempt(
            attempt_id=f"{task.task_id}:r{replica}:i{iteration}",
            task_id=task.task_id,
            iteration_index=iteration,
            phase=phase,
            strategy_id=strategy_id,
            code=code or "",
            report=report,
            prompt_fingerprint=bundle.fingerprint(),
        )
        log.attempts.append(attempt)
        if on_attempt is not None:
            on_attempt(attempt)

        if report is not None and report.all_tests_passed():
            memory.record_correct(code or "", mean_speedup_of(report))
            consecutive_failures = 0
            last_failure = None
            continue

        # Failure path. Attempts in the optimize phase never feed the
        # debugging trap (the correct baseline is kept regardless).
        if phase == PHASE_OPTIMIZE:
            continue
        consecutive_failures += 1
        trace = failure_summary(report)
        if should_reset_strategy(consecutive_failures, config):
            strategy_id += 1
            memory.reflections.clear()
            consecutive_failures = 0
            last_failure = None
            fresh_strategy = True
        else:
            last_failure = (code or "", trace)

    return log

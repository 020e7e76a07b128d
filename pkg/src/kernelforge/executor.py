"""Kernel execution protocol: subprocess driver, report model, and mock.

Generated code is untrusted, so real execution always happens in a
subprocess speaking a one-request-in / one-report-out JSON protocol over
standard streams (see PROTOCOL.md at the repo root). The engine never
crashes on runner misbehavior: garbage output, nonzero exits, and
timeouts all collapse into call_ok=false reports.

The in-process MockExecutor interprets ``# mock-*`` directives embedded
in candidate code, which keeps agent-loop tests deterministic and fast.
"""

from __future__ import annotations

import json
import math
import re
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import ExecutorUnavailableError, ProtocolError, RunnerCrashError
from .tasks import KernelTask, TestCase

DEFAULT_TIMEOUT = 120.0


@dataclass(frozen=True)
class TimingConfig:
    """Latency measurement counts: warmup iterations, then timed medians."""

    warmup_runs: int = 10
    timed_runs: int = 100

    def __post_init__(self):
        if self.warmup_runs < 0:
            raise ValueError("warmup_runs must be >= 0")
        if self.timed_runs < 1:
            raise ValueError("timed_runs must be >= 1")


@dataclass(frozen=True)
class ExecutionRequest:
    """Everything a runner needs to test and time one candidate."""

    candidate_code: str
    reference_code: str
    tests: tuple[TestCase, ...]
    timing: TimingConfig = TimingConfig()
    timeout: float = DEFAULT_TIMEOUT
    entry_point: str = "kernel"

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if not self.tests:
            raise ValueError("tests must be non-empty")


@dataclass(frozen=True)
class TestResult:
    """Outcome of one unit test; latencies appear only for passed tests."""

    __test__ = False  # not a pytest class, despite the domain name

    test_id: str
    passed: bool
    max_abs_err: float
    candidate_latency_ms: float | None = None
    reference_latency_ms: float | None = None


@dataclass(frozen=True)
class ExecutionReport:
    """Cascaded outcome: call status first, tests second, timing last."""

    call_ok: bool
    error_trace: str = ""
    test_results: tuple[TestResult, ...] = ()
    timed_out: bool = False

    def all_tests_passed(self) -> bool:
        return self.call_ok and bool(self.test_results) and all(
            r.passed for r in self.test_results
        )


def compare_outputs(candidate, reference, rtol: float, atol: float) -> tuple[bool, float]:
    """Normative tolerance comparison: |c - r| <= atol + rtol * |r| elementwise.

    Shape mismatch fails with a +inf error sentinel; max_abs_err is
    reported whether or not the test passes.
    """
    cand = np.asarray(candidate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if cand.shape != ref.shape:
        return False, math.inf
    if cand.size == 0:
        return True, 0.0
    diff = np.abs(cand - ref)
    bound = atol + rtol * np.abs(ref)
    passed = bool(np.all(diff <= bound))
    max_abs_err = float(np.max(diff))
    return passed, max_abs_err


def request_to_dict(request: ExecutionRequest) -> dict:
    """Serialize to the wire format documented in PROTOCOL.md."""
    return {
        "candidate_code": request.candidate_code,
        "reference_code": request.reference_code,
        "entry_point": request.entry_point,
        "tests": [
            {
                "id": t.test_id,
                "seed": t.seed,
                "rtol": t.rel_tolerance,
                "atol": t.abs_tolerance,
            }
            for t in request.tests
        ],
        "warmup_runs": request.timing.warmup_runs,
        "timed_runs": request.timing.timed_runs,
    }


def report_to_dict(report: ExecutionReport) -> dict:
    return {
        "call_ok": report.call_ok,
        "error_trace": report.error_trace,
        "timed_out": report.timed_out,
        "test_results": [
            {
                "id": r.test_id,
                "passed": r.passed,
                "max_abs_err": r.max_abs_err,
                "candidate_latency_ms": r.candidate_latency_ms,
                "reference_latency_ms": r.reference_latency_ms,
            }
            for r in report.test_results
        ],
    }


def report_from_dict(doc: dict) -> ExecutionReport:
    """Parse a runner report document; raises ProtocolError when malformed."""
    if not isinstance(doc, dict):
        raise ProtocolError(f"report is not an object: {type(doc).__name__}")
    try:
        call_ok = bool(doc["call_ok"])
        results = []
        for raw in doc.get("test_results", []):
            max_abs_err = raw["max_abs_err"]
            results.append(
                TestResult(
                    test_id=str(raw["id"]),
                    passed=bool(raw["passed"]),
                    max_abs_err=float(max_abs_err) if max_abs_err is not None else math.inf,
                    candidate_latency_ms=_opt_float(raw.get("candidate_latency_ms")),
                    reference_latency_ms=_opt_float(raw.get("reference_latency_ms")),
                )
            )
        report = ExecutionReport(
            call_ok=call_ok,
            error_trace=str(doc.get("error_trace", "")),
            test_results=tuple(results),
            timed_out=bool(doc.get("timed_out", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed report field: {exc}") from exc
    return normalize_report(report)


def _opt_float(value) -> float | None:
    return None if value is None else float(value)


def normalize_report(report: ExecutionReport) -> ExecutionReport:
    """Enforce the cascade: a failed call carries no test results, and
    latencies survive only when every test passed."""
    if not report.call_ok and report.test_results:
        report = ExecutionReport(
            call_ok=False,
            error_trace=report.error_trace,
            test_results=(),
            timed_out=report.timed_out,
        )
    elif report.test_results and not all(r.passed for r in report.test_results):
        stripped = tuple(
            TestResult(r.test_id, r.passed, r.max_abs_err, None, None)
            for r in report.test_results
        )
        report = ExecutionReport(
            call_ok=report.call_ok,
            error_trace=report.error_trace,
            test_results=stripped,
            timed_out=report.timed_out,
        )
    return report


def execute(request: ExecutionRequest, runner_command: Sequence[str]) -> ExecutionReport:
    """Run one candidate through a runner subprocess.

    The request document goes to the runner's stdin; one report document is
    read back from stdout. A runner that overruns the timeout is killed
    (timed_out=true); garbage output and nonzero exits map to
    call_ok=false reports carrying the raw output as the trace. Only a
    missing runner executable raises (ExecutorUnavailableError).
    """
    payload = json.dumps(request_to_dict(request))
    try:
        proc = subprocess.run(
            list(runner_command),
            input=payload,
            capture_output=True,
            text=True,
            timeout=request.timeout,
        )
    except FileNotFoundError as exc:
        raise ExecutorUnavailableError(f"runner command not found: {exc}") from exc
    except subprocess.TimeoutExpired:
        return ExecutionReport(
            call_ok=False,
            error_trace=f"runner exceeded timeout of {request.timeout}s and was killed",
            timed_out=True,
        )

    raw_out = proc.stdout or ""
    if proc.returncode != 0:
        crash = RunnerCrashError(f"runner exited {proc.returncode}")
        return ExecutionReport(
            call_ok=False,
            error_trace=f"{crash}\nstdout:\n{raw_out}\nstderr:\n{proc.stderr or ''}",
        )
    try:
        doc = json.loads(raw_out)
        return report_from_dict(doc)
    except (json.JSONDecodeError, ProtocolError) as exc:
        return ExecutionReport(
            call_ok=False,
            error_trace=f"protocol violation: {exc}\nraw output:\n{raw_out}",
        )


class Executor(Protocol):
    """Anything that can turn an ExecutionRequest into an ExecutionReport."""

    def run(self, request: ExecutionRequest) -> ExecutionReport:
        ...


class SubprocessExecutor:
    """Real executor: one runner subprocess per call, capped concurrency.

    GPU runners typically cap at one concurrent subprocess per device;
    mock-friendly CPU runners can go wider.
    """

    def __init__(
        self,
        runner_command: Sequence[str],
        timing: TimingConfig = TimingConfig(),
        timeout: float = DEFAULT_TIMEOUT,
        max_concurrent: int | None = 1,
    ):
        self.runner_command = list(runner_command)
        self.timing = timing
        self.timeout = timeout
        self._gate = threading.Semaphore(max_concurrent) if max_concurrent else None

    def run(self, request: ExecutionRequest) -> ExecutionReport:
        if self._gate is None:
            return execute(request, self.runner_command)
        with self._gate:
            return execute(request, self.runner_command)


_DIRECTIVE_RE = re.compile(r"^\s*#\s*mock-(call-error|fail-tests|latency|timeout)\s*:?\s*(.*)$")


class MockExecutor:
    """Deterministic in-process executor driven by directives in the code.

    Recognized directives (one per line, anywhere in the candidate):

    - ``# mock-call-error: <message>`` -- candidate fails to compile/run.
    - ``# mock-fail-tests: all`` or ``# mock-fail-tests: t1,t2`` -- the
      named tests fail with max_abs_err 1.0; the rest pass.
    - ``# mock-latency: cand=2.0 ref=4.0`` -- all tests pass with the given
      per-test latencies (defaults 1.0/1.0).
    - ``# mock-timeout`` -- simulated wall-clock kill.

    Directive-free code passes everything at 1.0ms/1.0ms.
    """

    timing = TimingConfig(warmup_runs=0, timed_runs=1)
    timeout = DEFAULT_TIMEOUT

    def run(self, request: ExecutionRequest) -> ExecutionReport:
        directives = {}
        for line in request.candidate_code.splitlines():
            match = _DIRECTIVE_RE.match(line)
            if match:
                directives[match.group(1)] = match.group(2).strip()

        if "call-error" in directives:
            return ExecutionReport(
                call_ok=False,
                error_trace=directives["call-error"] or "mock call error",
            )
        if "timeout" in directives:
            return ExecutionReport(
                call_ok=False,
                error_trace=f"runner exceeded timeout of {request.timeout}s and was killed",
                timed_out=True,
            )

        cand_ms, ref_ms = 1.0, 1.0
        if "latency" in directives:
            spec = dict(
                part.split("=", 1) for part in directives["latency"].split() if "=" in part
            )
            cand_ms = float(spec.get("cand", 1.0))
            ref_ms = float(spec.get("ref", 1.0))

        failing: set[str] = set()
        if "fail-tests" in directives:
            spec = directives["fail-tests"] or "all"
            if spec == "all":
                failing = {t.test_id for t in request.tests}
            else:
                failing = {part.strip() for part in spec.split(",") if part.strip()}

        results = []
        all_pass = not failing
        for test in request.tests:
            if test.test_id in failing:
                results.append(TestResult(test.test_id, False, 1.0, None, None))
            else:
                results.append(
                    TestResult(
                        test.test_id,
                        True,
                        0.0,
                        cand_ms if all_pass else None,
                        ref_ms if all_pass else None,
                    )
                )
        return ExecutionReport(call_ok=True, error_trace="", test_results=tuple(results))


def build_request(
    code: str,
    task: KernelTask,
    timing: TimingConfig = TimingConfig(),
    timeout: float = DEFAULT_TIMEOUT,
) -> ExecutionRequest:
    """Assemble the wire request for one candidate against one task."""
    return ExecutionRequest(
        candidate_code=code,
        reference_code=task.reference_code,
        tests=tuple(task.test_spec),
        timing=timing,
        timeout=timeout,
        entry_point=task.entry_name(),
    )

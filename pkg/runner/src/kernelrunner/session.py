"""One protocol session: load sources, run seeded tests, time on success.

Every internal exception is caught and reported as a call_ok=false
report with the traceback as the error trace; the session function never
raises for problems inside the tested code. Candidate and reference
sources are executed in fresh, throwaway namespaces, never imported into
the runner's own modules, and anything they print is diverted to stderr
so stdout stays a clean protocol stream.
"""

from __future__ import annotations

import contextlib
import sys
import traceback

import numpy as np

from .timing import clone_args, detect_device, median_latency_ms

DEFAULT_ENTRY_POINT = "kernel"
DEFAULT_INPUT_LENGTH = 256


def build_inputs(seed: int, reference_ns: dict):
    """Seeded positional arguments for one test.

    The reference module owns input construction via make_inputs(rng);
    without one, the fallback is two standard-normal float64 vectors.
    Identical seeds yield bit-identical inputs.
    """
    rng = np.random.default_rng(seed)
    maker = reference_ns.get("make_inputs")
    if callable(maker):
        return tuple(maker(rng))
    return (
        rng.standard_normal(DEFAULT_INPUT_LENGTH),
        rng.standard_normal(DEFAULT_INPUT_LENGTH),
    )


def compare_arrays(candidate, reference, rtol: float, atol: float):
    """Tolerance comparison, bit-compatible with the engine's rule:
    pass iff shapes match and abs(c - r) <= atol + rtol * abs(r)."""
    cand = np.asarray(candidate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if cand.shape != ref.shape:
        return False, float("inf")
    if cand.size == 0:
        return True, 0.0
    delta = np.abs(cand - ref)
    passed = bool(np.all(delta <= atol + rtol * np.abs(ref)))
    return passed, float(np.max(delta))


def _failure_report(trace: str) -> dict:
    return {"call_ok": False, "error_trace": trace, "timed_out": False, "test_results": []}


def _load_namespace(source: str, label: str) -> dict:
    namespace: dict = {"__name__": f"_runner_{label}"}
    exec(compile(source, f"<{label}>", "exec"), namespace)
    return namespace


def run_session(request: dict) -> dict:
    """Execute one request document and return the report document."""
    try:
        return _run_session_inner(request)
    except BaseException:
        # Last-resort catch: the runner must emit a report if it possibly can.
        return _failure_report(traceback.format_exc())


def _run_session_inner(request: dict) -> dict:
    if not isinstance(request, dict):
        return _failure_report(f"request is not an object: {type(request).__name__}")
    for field in ("candidate_code", "reference_code", "tests", "warmup_runs", "timed_runs"):
        if field not in request:
            return _failure_report(f"request missing required field {field!r}")
    tests = request["tests"]
    if not isinstance(tests, list) or not tests:
        return _failure_report("request field 'tests' must be a non-empty list")

    entry_point = str(request.get("entry_point") or DEFAULT_ENTRY_POINT)
    device = detect_device()

    # Tested code must not be able to corrupt the protocol stream.
    with contextlib.redirect_stdout(sys.stderr):
        try:
            reference_ns = _load_namespace(str(request["reference_code"]), "reference")
        except BaseException:
            return _failure_report(
                f"reference code failed to load:\n{traceback.format_exc()}"
            )
        reference_fn = reference_ns.get(entry_point)
        if not callable(reference_fn):
            return _failure_report(
                f"reference code does not define callable {entry_point!r}"
            )

        try:
            candidate_ns = _load_namespace(str(request["candidate_code"]), "candidate")
        except BaseException:
            return _failure_report(traceback.format_exc())
        candidate_fn = candidate_ns.get(entry_point)
        if not callable(candidate_fn):
            return _failure_report(
                f"candidate code does not define callable {entry_point!r}"
            )

        results = []
        per_test_inputs = []
        for test in tests:
            test_id = str(test.get("id", ""))
            try:
                inputs = build_inputs(int(test["seed"]), reference_ns)
                reference_out = reference_fn(*clone_args(inputs))
                candidate_out = candidate_fn(*clone_args(inputs))
                passed, max_abs_err = compare_arrays(
                    candidate_out,
                    reference_out,
                    float(test.get("rtol", 0.0)),
                    float(test.get("atol", 0.0)),
                )
            except BaseException:
                return _failure_report(
                    f"test {test_id!r} raised:\n{traceback.format_exc()}"
                )
            per_test_inputs.append(inputs)
            results.append(
                {
                    "id": test_id,
                    "passed": passed,
                    "max_abs_err": max_abs_err,
                    "candidate_latency_ms": None,
                    "reference_latency_ms": None,
                }
            )

        if all(r["passed"] for r in results):
            warmup = max(int(request["warmup_runs"]), 0)
            timed = max(int(request["timed_runs"]), 1)
            try:
                for result, inputs in zip(results, per_test_inputs):
                    result["candidate_latency_ms"] = median_latency_ms(
                        candidate_fn, inputs, warmup, timed, device
                    )
                    result["reference_latency_ms"] = median_latency_ms(
                        reference_fn, inputs, warmup, timed, device
                    )
            except BaseException:
                return _failure_report(
                    f"timing phase raised:\n{traceback.format_exc()}"
                )

    return {"call_ok": True, "error_trace": "", "timed_out": False, "test_results": results}

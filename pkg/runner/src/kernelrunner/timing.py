"""Latency measurement: warmup calls, then the median of timed runs.

Uses device-synchronized CUDA/HIP event timing when a GPU stack is
available, and a monotonic wall clock otherwise, so the protocol stays
testable on any desk machine.
"""

from __future__ import annotations

import copy
import statistics
import time

import numpy as np

MIN_LATENCY_MS = 1e-9  # reports guarantee latencies > 0


def detect_device() -> str:
    try:
        import torch

        if torch.cuda.is_available():
            return "gpu"
    except Exception:
        pass
    return "cpu"


def clone_args(args):
    """Copy call arguments so mutating kernels cannot leak state."""
    cloned = []
    for arg in args:
        if isinstance(arg, np.ndarray):
            cloned.append(arg.copy())
        else:
            cloned.append(copy.deepcopy(arg))
    return tuple(cloned)


def _time_once_cpu(fn, args) -> float:
    start = time.perf_counter()
    fn(*args)
    return (time.perf_counter() - start) * 1000.0


def _time_once_gpu(fn, args) -> float:
    import torch

    start = torch.cuda.Event(enable_timing=True)
    end = torch.cuda.Event(enable_timing=True)
    torch.cuda.synchronize()
    start.record()
    fn(*args)
    end.record()
    torch.cuda.synchronize()
    return float(start.elapsed_time(end))


def median_latency_ms(fn, args, warmup_runs: int, timed_runs: int, device: str) -> float:
    """Median per-call latency in ms; argument copies happen outside the clock."""
    time_once = _time_once_gpu if device == "gpu" else _time_once_cpu
    samples = []
    for i in range(warmup_runs + timed_runs):
        call_args = clone_args(args)
        elapsed = time_once(fn, call_args)
        if i >= warmup_runs:
            samples.append(elapsed)
    return max(statistics.median(samples), MIN_LATENCY_MS)

"""Agentic GPU-kernel generation engine and evaluation harness.

An iterative generate/evaluate/reflect/optimize loop over LLM-produced
kernels, plus the metrics used to score it: call accuracy, execution
accuracy, speedup, and pass@k under sequential and parallel scaling.
"""

__version__ = "0.1.0"

from .errors import EngineError
from .executor import (
    ExecutionReport,
    ExecutionRequest,
    MockExecutor,
    SubprocessExecutor,
    TestResult,
    TimingConfig,
    compare_outputs,
    execute,
)
from .gateway import (
    BackendConfig,
    HttpBackend,
    LLMResponse,
    MockBackend,
    PromptBundle,
    assemble_generation_prompt,
    assemble_optimization_prompt,
    assemble_reflection_prompt,
    complete,
    extract_code_block,
)
from .loop import (
    AgentConfig,
    AgentMemory,
    AttemptLog,
    CandidateAttempt,
    PerfEntry,
    PerfHistory,
    evaluate_cascaded,
    run_task,
    should_reset_strategy,
)
from .metrics import (
    AttemptRecord,
    MetricsSummary,
    RunLog,
    ScalingPoint,
    call_accuracy,
    exec_accuracy,
    kernel_speedup,
    merge_logs,
    pass_at_k,
    report,
    run_parallel,
    scaling_table,
)
from .retrieval import CorpusEntry, load_corpus, retrieve_top1, similarity, tokenize_code
from .tasks import (
    BenchmarkManifest,
    KernelTask,
    TestCase,
    load_manifest,
    save_manifest,
    validate_task,
)

__all__ = [
    "__version__",
    "EngineError",
    "AgentConfig",
    "AgentMemory",
    "AttemptLog",
    "AttemptRecord",
    "BackendConfig",
    "BenchmarkManifest",
    "CandidateAttempt",
    "CorpusEntry",
    "ExecutionReport",
    "ExecutionRequest",
    "HttpBackend",
    "KernelTask",
    "LLMResponse",
    "MetricsSummary",
    "MockBackend",
    "MockExecutor",
    "PerfEntry",
    "PerfHistory",
    "PromptBundle",
    "RunLog",
    "ScalingPoint",
    "SubprocessExecutor",
    "TestCase",
    "TestResult",
    "TimingConfig",
    "assemble_generation_prompt",
    "assemble_optimization_prompt",
    "assemble_reflection_prompt",
    "call_accuracy",
    "compare_outputs",
    "complete",
    "evaluate_cascaded",
    "exec_accuracy",
    "execute",
    "extract_code_block",
    "kernel_speedup",
    "load_corpus",
    "load_manifest",
    "merge_logs",
    "pass_at_k",
    "report",
    "retrieve_top1",
    "run_parallel",
    "run_task",
    "save_manifest",
    "scaling_table",
    "should_reset_strategy",
    "similarity",
    "tokenize_code",
    "validate_task",
]

"""Chat-model backends and prompt assembly for the three agent roles.

Prompt assembly is pure: the same (task, exemplar, knowledge, memory)
always yields a byte-identical PromptBundle, which keeps agent runs
replayable. Backends speak the de-facto chat-completion wire shape
(system + user messages) so hosted and local endpoints are
interchangeable; a scripted mock backend replays a transcript for
deterministic tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Protocol

import requests

from .errors import (
    AuthError,
    BackendTimeoutError,
    EmptyHistoryError,
    EmptyTraceError,
    IncorrectEntryError,
    TransportError,
    ValidationError,
    Violation,
)

if TYPE_CHECKING:
    from .loop import AgentMemory, PerfHistory
    from .retrieval import CorpusEntry
    from .tasks import KernelTask

logger = logging.getLogger(__name__)

SEGMENT_KINDS = (
    "instruction",
    "knowledge_block",
    "one_shot_exemplar",
    "error_trace",
    "prior_code",
    "perf_history",
    "strategy_directive",
)

GENERATOR_SYSTEM = (
    "You are an expert GPU kernel engineer. Produce a complete, runnable "
    "kernel for the task below. Reply with exactly one fenced code block "
    "containing the full source."
)

REFLECTOR_SYSTEM = (
    "You are an expert GPU kernel engineer debugging a failing kernel. "
    "Reply with a short diagnosis followed by exactly one fenced code block "
    "containing the corrected full source."
)

OPTIMIZER_SYSTEM = (
    "You are an expert GPU kernel performance engineer. Study the "
    "functionally correct candidates and their measured speedups, then "
    "propose a faster kernel. Reply with the strategy followed by exactly "
    "one fenced code block containing the revised full source."
)

_REFLECT_DIRECTIVE = (
    "Analyze why the kernel above failed, identify the root cause, and "
    "produce a corrected kernel."
)

_OPTIMIZE_DIRECTIVE = (
    "Every candidate above passed all tests; they are listed from slowest "
    "to fastest. State an optimization strategy, then provide the revised "
    "kernel."
)

_FRESH_STRATEGY_DIRECTIVE = (
    "Previous attempts at this task kept failing and were discarded. Take "
    "a fundamentally different approach this time."
)

# Content between an opening fence line and its closing fence.
_FENCE_RE = re.compile(r"```[^`\n]*\n(.*?)\n?```", re.DOTALL)


@dataclass(frozen=True)
class BackendConfig:
    """Connection and sampling settings for one chat-model backend.

    Temperature defaults to 1.0 so parallel replicas sample diverse code.
    The credential is only ever read from the environment variable named
    by api_key_env.
    """

    endpoint_url: str = ""
    model_name: str = "mock"
    temperature: float = 1.0
    max_output_tokens: int = 4096
    request_timeout: float = 120.0
    api_key_env: str = ""
    max_retries: int = 2

    def validate(self) -> list[Violation]:
        violations = []
        if self.temperature < 0:
            violations.append(Violation("NegativeTemperature", "temperature must be >= 0"))
        if self.request_timeout <= 0:
            violations.append(Violation("NonPositiveTimeout", "request_timeout must be > 0"))
        if self.max_output_tokens <= 0:
            violations.append(Violation("NonPositiveMaxTokens", "max_output_tokens must be > 0"))
        if self.max_retries < 0:
            violations.append(Violation("NegativeRetries", "max_retries must be >= 0"))
        return violations


@dataclass(frozen=True)
class PromptBundle:
    """Ordered prompt segments plus the system text for one request."""

    system_text: str
    segments: tuple[tuple[str, str], ...]

    def __post_init__(self):
        for kind, _ in self.segments:
            if kind not in SEGMENT_KINDS:
                raise ValueError(f"unknown segment kind {kind!r}")
        exemplars = sum(1 for kind, _ in self.segments if kind == "one_shot_exemplar")
        if exemplars > 1:
            raise ValueError("at most one one_shot_exemplar segment is allowed")

    def kinds(self) -> tuple[str, ...]:
        return tuple(kind for kind, _ in self.segments)

    def user_text(self) -> str:
        return "\n\n".join(text for _, text in self.segments)

    def fingerprint(self) -> str:
        payload = json.dumps(
            {"system": self.system_text, "segments": list(self.segments)},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class LLMResponse:
    """Raw model output plus the code block pulled out of it."""

    raw_text: str
    extracted_code: str | None
    usage: dict[str, int] = field(default_factory=dict)
    latency: float = 0.0


def extract_code_block(raw_text: str) -> str | None:
    """Contents of the last fenced code block, or None when there is none.

    Models often emit scratch work before the final answer, so the last
    block wins.
    """
    blocks = _FENCE_RE.findall(raw_text)
    if not blocks:
        return None
    return blocks[-1]


def assemble_generation_prompt(
    task: "KernelTask",
    exemplar: "CorpusEntry | None" = None,
    knowledge: str | None = None,
    fresh_strategy: bool = False,
) -> PromptBundle:
    """Build the generator prompt: [knowledge?, exemplar?, instruction].

    Omitting both exemplar and knowledge reproduces the direct-prompt
    baseline. fresh_strategy appends a directive to abandon prior
    approaches (used after a debugging-trap reset).
    """
    segments: list[tuple[str, str]] = []
    if knowledge:
        segments.append(("knowledge_block", f"## Background knowledge\n\n{knowledge}"))
    if exemplar is not None:
        segments.append(
            (
                "one_shot_exemplar",
                f"## Example of a well-written kernel\n\n```python\n{exemplar.code}\n```",
            )
        )
    segments.append(("instruction", f"## Task\n\n{task.instruction}"))
    if fresh_strategy:
        segments.append(("strategy_directive", _FRESH_STRATEGY_DIRECTIVE))
    return PromptBundle(system_text=GENERATOR_SYSTEM, segments=tuple(segments))


def assemble_reflection_prompt(
    task: "KernelTask",
    failed_code: str,
    error_trace: str,
    memory: "AgentMemory",
    window: int = 3,
) -> PromptBundle:
    """Build the reflector prompt from the newest failure plus recent history.

    The bundle carries the most recent `window` (code, trace) rounds,
    counting the failure passed in as the newest round; older rounds are
    dropped to bound prompt growth.
    """
    if not error_trace:
        raise EmptyTraceError("reflection requires a non-empty error trace")
    rounds = [*memory.reflections, (failed_code, error_trace)][-window:]
    segments: list[tuple[str, str]] = [("instruction", f"## Task\n\n{task.instruction}")]
    for code, trace in rounds:
        segments.append(("prior_code", f"## Failing kernel\n\n```python\n{code}\n```"))
        segments.append(("error_trace", f"## Error trace\n\n```\n{trace}\n```"))
    segments.append(("strategy_directive", _REFLECT_DIRECTIVE))
    return PromptBundle(system_text=REFLECTOR_SYSTEM, segments=tuple(segments))


def assemble_optimization_prompt(task: "KernelTask", history: "PerfHistory") -> PromptBundle:
    """Build the optimizer prompt from the correct-candidate history.

    Entries appear in ascending speedup order (best last), one perf_history
    segment each; only functionally correct candidates are admissible.
    """
    entries = list(history.entries)
    if not entries:
        raise EmptyHistoryError("optimization requires at least one correct candidate")
    for entry in entries:
        if not entry.tests_passed:
            raise IncorrectEntryError(
                "optimization history contains a candidate with failing tests"
            )
    entries.sort(key=lambda e: e.speedup)
    segments: list[tuple[str, str]] = [("instruction", f"## Task\n\n{task.instruction}")]
    for entry in entries:
        segments.append(
            (
                "perf_history",
                f"## Candidate (speedup {entry.speedup:.4f}x)\n\n```python\n{entry.code}\n```",
            )
        )
    segments.append(("strategy_directive", _OPTIMIZE_DIRECTIVE))
    return PromptBundle(system_text=OPTIMIZER_SYSTEM, segments=tuple(segments))


class Backend(Protocol):
    """Anything that can answer one prompt with raw text and usage counts."""

    name: str

    def request_text(self, bundle: PromptBundle, config: BackendConfig) -> tuple[str, dict]:
        ...


class MockBackend:
    """Replays a scripted transcript, one response per request, in order.

    Transcript consumption is serialized behind a lock so concurrent
    callers still observe deterministic ordering. An exhausted transcript
    is a non-retryable transport failure.
    """

    name = "mock"

    def __init__(self, transcript: Iterable[str]):
        self._responses = list(transcript)
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "MockBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def remaining(self) -> int:
        with self._lock:
            return len(self._responses) - self._cursor

    def request_text(self, bundle: PromptBundle, config: BackendConfig) -> tuple[str, dict]:
        with self._lock:
            if self._cursor >= len(self._responses):
                raise TransportError("transcript exhausted", backend=self.name, retryable=False)
            text = self._responses[self._cursor]
            self._cursor += 1
        return text, {"completion_tokens": len(text.split())}


def build_request_body(bundle: PromptBundle, config: BackendConfig) -> dict:
    """Chat-completion request body; segment order is preserved verbatim."""
    return {
        "model": config.model_name,
        "messages": [
            {"role": "system", "content": bundle.system_text},
            {"role": "user", "content": bundle.user_text()},
        ],
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    }


class HttpBackend:
    """Chat-completion endpoint client (hosted or local server)."""

    def __init__(self, config: BackendConfig, trace: bool = False):
        self.config = config
        self.name = f"{config.model_name}@{config.endpoint_url}"
        self.trace = trace

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env)
            if not key:
                raise AuthError(
                    f"credential variable {self.config.api_key_env} is unset",
                    backend=self.name,
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def request_text(self, bundle: PromptBundle, config: BackendConfig) -> tuple[str, dict]:
        body = build_request_body(bundle, config)
        if self.trace:
            logger.debug("request to %s: %s", self.name, json.dumps(body))
        try:
            response = requests.post(
                config.endpoint_url,
                json=body,
                headers=self._headers(),
                timeout=config.request_timeout,
            )
        except requests.Timeout as exc:
            raise BackendTimeoutError(str(exc), backend=self.name) from exc
        except requests.RequestException as exc:
            raise TransportError(str(exc), backend=self.name, retryable=True) from exc
        if response.status_code in (401, 403):
            raise AuthError(f"HTTP {response.status_code}", backend=self.name)
        if response.status_code >= 400:
            raise TransportError(
                f"HTTP {response.status_code}: {response.text[:500]}",
                backend=self.name,
                retryable=response.status_code >= 500,
            )
        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(
                f"malformed completion payload: {exc}", backend=self.name, retryable=False
            ) from exc
        if self.trace:
            logger.debug("response from %s: %s", self.name, json.dumps(payload))
        usage = payload.get("usage", {}) if isinstance(payload, dict) else {}
        return text, {k: v for k, v in usage.items() if isinstance(v, int)}


def complete(bundle: PromptBundle, config: BackendConfig, backend: Backend) -> LLMResponse:
    """Send one prompt, retrying transient transport failures.

    Records wall-clock latency and token usage; the extracted code is the
    last fenced block of the raw response, when one exists.
    """
    config_violations = config.validate()
    if config_violations:
        raise ValidationError(config_violations)
    attempts_left = config.max_retries + 1
    start = time.perf_counter()
    while True:
        attempts_left -= 1
        try:
            raw_text, usage = backend.request_text(bundle, config)
            break
        except (TransportError, BackendTimeoutError) as exc:
            retryable = getattr(exc, "retryable", True)
            if attempts_left <= 0 or not retryable:
                raise
            logger.debug("retrying after transport failure: %s", exc)
    latency = time.perf_counter() - start
    return LLMResponse(
        raw_text=raw_text,
        extracted_code=extract_code_block(raw_text),
        usage=usage,
        latency=latency,
    )

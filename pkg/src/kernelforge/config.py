"""Engine configuration file: backend, agent, timing, and executor blocks.

One JSON document configures a whole run::

    {
      "backend": {"kind": "mock", "transcript": "transcript.json"},
      "agent": {"max_iterations": 10, "max_perf_debug_num": 3},
      "timing": {"warmup_runs": 10, "timed_runs": 100},
      "executor": {"kind": "mock"}
    }

Backend kinds: "mock" (replays a transcript file; a flat JSON list is
cloned per replica, ``{"replicas": [[...], ...]}`` scripts each replica
separately) and "http" (chat-completion endpoint; credential read from
the environment variable named by api_key_env, never from the file).
Executor kinds: "mock" (in-process, directive-driven) and "subprocess"
(spawns the runner command from the "command" list).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError, Violation
from .executor import DEFAULT_TIMEOUT, MockExecutor, SubprocessExecutor, TimingConfig
from .gateway import Backend, BackendConfig, HttpBackend, MockBackend
from .loop import AgentConfig


@dataclass(frozen=True)
class ExecutorSpec:
    kind: str = "mock"
    command: tuple[str, ...] = ()
    timeout: float = DEFAULT_TIMEOUT
    max_concurrent: int = 1


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "mock"
    transcript_path: str = ""
    per_replica_transcripts: tuple[tuple[str, ...], ...] = ()
    config: BackendConfig = BackendConfig()


@dataclass
class EngineConfig:
    """Validated snapshot of everything a run needs."""

    backend: BackendSpec = field(default_factory=BackendSpec)
    agent: AgentConfig = field(default_factory=AgentConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    executor: ExecutorSpec = field(default_factory=ExecutorSpec)
    knowledge_file: str = ""

    def validate(self) -> list[Violation]:
        violations = list(self.agent.validate())
        violations.extend(self.backend.config.validate())
        if self.backend.kind not in ("mock", "http"):
            violations.append(
                Violation("UnknownBackendKind", f"backend kind {self.backend.kind!r}")
            )
        if self.backend.kind == "mock" and not (
            self.backend.transcript_path or self.backend.per_replica_transcripts
        ):
            violations.append(
                Violation("MissingTranscript", "mock backend needs a transcript file")
            )
        if self.backend.kind == "http" and not self.backend.config.endpoint_url:
            violations.append(
                Violation("MissingEndpoint", "http backend needs endpoint_url")
            )
        if self.executor.kind not in ("mock", "subprocess"):
            violations.append(
                Violation("UnknownExecutorKind", f"executor kind {self.executor.kind!r}")
            )
        if self.executor.kind == "subprocess" and not self.executor.command:
            violations.append(
                Violation("MissingRunnerCommand", "subprocess executor needs a command list")
            )
        if self.executor.timeout <= 0:
            violations.append(Violation("NonPositiveTimeout", "executor timeout must be > 0"))
        return violations

    def load_knowledge(self, base_dir: Path) -> str | None:
        if not self.knowledge_file:
            return None
        return (base_dir / self.knowledge_file).read_text(encoding="utf-8")

    def make_executor(self):
        if self.executor.kind == "mock":
            return MockExecutor()
        return SubprocessExecutor(
            self.executor.command,
            timing=self.timing,
            timeout=self.executor.timeout,
            max_concurrent=self.executor.max_concurrent,
        )

    def backend_factory(self, base_dir: Path, trace: bool = False):
        """Per-replica backend builder honoring the transcript layout."""
        if self.backend.kind == "http":
            def make_http(replica: int) -> Backend:
                return HttpBackend(self.backend.config, trace=trace)

            return make_http

        if self.backend.per_replica_transcripts:
            scripts = self.backend.per_replica_transcripts

            def make_scripted(replica: int) -> Backend:
                return MockBackend(scripts[replica % len(scripts)])

            return make_scripted

        transcript = json.loads(
            (base_dir / self.backend.transcript_path).read_text(encoding="utf-8")
        )
        if isinstance(transcript, dict) and "replicas" in transcript:
            per_replica = [list(entry) for entry in transcript["replicas"]]

            def make_keyed(replica: int) -> Backend:
                return MockBackend(per_replica[replica % len(per_replica)])

            return make_keyed
        if not isinstance(transcript, list):
            raise ParseError("mock transcript must be a JSON list or {'replicas': [...]}")

        def make_flat(replica: int) -> Backend:
            return MockBackend(transcript)

        return make_flat


def _backend_spec(raw: dict) -> BackendSpec:
    return BackendSpec(
        kind=str(raw.get("kind", "mock")),
        transcript_path=str(raw.get("transcript", "")),
        config=BackendConfig(
            endpoint_url=str(raw.get("endpoint_url", "")),
            model_name=str(raw.get("model_name", "mock")),
            temperature=float(raw.get("temperature", 1.0)),
            max_output_tokens=int(raw.get("max_output_tokens", 4096)),
            request_timeout=float(raw.get("request_timeout", 120.0)),
            api_key_env=str(raw.get("api_key_env", "")),
            max_retries=int(raw.get("max_retries", 2)),
        ),
    )


def load_config(path: str | Path) -> EngineConfig:
    """Read and validate an engine config file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"config {path} must be a JSON object")

    agent_raw = doc.get("agent", {})
    timing_raw = doc.get("timing", {})
    executor_raw = doc.get("executor", {})
    try:
        config = EngineConfig(
            backend=_backend_spec(doc.get("backend", {})),
            agent=AgentConfig(
                max_iterations=int(agent_raw.get("max_iterations", 10)),
                max_perf_debug_num=int(agent_raw.get("max_perf_debug_num", 3)),
                reflection_window=int(agent_raw.get("reflection_window", 3)),
                optimizer_enabled=bool(agent_raw.get("optimizer_enabled", True)),
                one_shot_enabled=bool(agent_raw.get("one_shot_enabled", True)),
                knowledge_enabled=bool(agent_raw.get("knowledge_enabled", True)),
            ),
            timing=TimingConfig(
                warmup_runs=int(timing_raw.get("warmup_runs", 10)),
                timed_runs=int(timing_raw.get("timed_runs", 100)),
            ),
            executor=ExecutorSpec(
                kind=str(executor_raw.get("kind", "mock")),
                command=tuple(str(c) for c in executor_raw.get("command", [])),
                timeout=float(executor_raw.get("timeout", DEFAULT_TIMEOUT)),
                max_concurrent=int(executor_raw.get("max_concurrent", 1)),
            ),
            knowledge_file=str(doc.get("knowledge_file", "")),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed config value: {exc}") from exc

    violations = config.validate()
    if violations:
        raise ValidationError(violations)
    return config

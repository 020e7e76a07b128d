"""Operator entry point: run sweeps, report metrics, scaling tables.

Exit-code policy: benchmark outcomes are data, so a completed sweep exits
0 even when every kernel failed. Nonzero exits are reserved for engine
faults and invalid inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__, metrics
from .config import EngineConfig, load_config
from .errors import EngineError, ParseError, ValidationError
from .loop import AgentConfig
from .retrieval import load_corpus, retrieve_top1, tokenize_code
from .tasks import load_manifest, validate_task

logger = logging.getLogger(__name__)

ABLATIONS = {
    "no-knowledge": "knowledge_enabled",
    "no-one-shot": "one_shot_enabled",
    "no-optimizer": "optimizer_enabled",
}


def _apply_ablations(agent: AgentConfig, ablations: list[str]) -> AgentConfig:
    overrides = {}
    for name in ablations:
        if name not in ABLATIONS:
            raise ParseError(
                f"unknown ablation {name!r}; expected one of {sorted(ABLATIONS)}"
            )
        overrides[ABLATIONS[name]] = False
    fields = asdict(agent)
    fields.update(overrides)
    return AgentConfig(**fields)


def _write_run_manifest(
    out_dir: Path,
    config: EngineConfig,
    agent: AgentConfig,
    benchmark_name: str,
    replicas: int,
    started_at: str,
) -> None:
    # Written before the first attempt and never touched again; completion
    # details land in the per-replica log footers.
    doc = {
        "engine_version": __version__,
        "benchmark": benchmark_name,
        "replicas": replicas,
        "started_at": started_at,
        "agent_config": asdict(agent),
        "backend": {
            "kind": config.backend.kind,
            "model_name": config.backend.config.model_name,
            "temperature": config.backend.config.temperature,
        },
        "timing": asdict(config.timing),
        "executor": {"kind": config.executor.kind, "timeout": config.executor.timeout},
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_run(args) -> int:
    config = load_config(args.config)
    manifest = load_manifest(args.benchmark)
    agent = _apply_ablations(config.agent, args.ablate)
    if args.iterations is not None:
        fields = asdict(agent)
        fields["max_iterations"] = args.iterations
        agent = AgentConfig(**fields)
    violations = agent.validate()
    if violations:
        raise ValidationError(violations)

    config_dir = Path(args.config).parent
    manifest_dir = Path(args.benchmark).parent
    corpus = None
    if agent.one_shot_enabled and manifest.exemplar_corpus_ref:
        corpus = load_corpus(manifest_dir / manifest.exemplar_corpus_ref)
    knowledge = config.load_knowledge(config_dir)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started_at = metrics.utc_now_iso()
    _write_run_manifest(out_dir, config, agent, manifest.name, args.replicas, started_at)

    logs = metrics.run_parallel(
        manifest,
        agent,
        config.backend_factory(config_dir, trace=args.trace),
        config.make_executor(),
        replicas=args.replicas,
        corpus=corpus,
        knowledge=knowledge,
        backend_config=config.backend.config,
        timing=config.timing,
        timeout=config.executor.timeout,
        out_dir=out_dir,
        max_workers=args.workers,
        engine_version=__version__,
    )

    failed = [i for i, log in enumerate(logs) if log.failure]
    total = sum(len(log.records) for log in logs)
    print(f"run complete: {len(logs)} replica(s), {total} attempt(s), logs in {out_dir}")
    for idx in failed:
        print(f"replica {idx} incomplete: {logs[idx].failure}")
    return 0


def cmd_report(args) -> int:
    logs = metrics.load_log_dir(args.log_dir)
    summary = metrics.report(
        logs, grouping=args.group, conditional_exec=args.conditional_exec
    )
    table = metrics.render_summary_table(summary)
    sys.stdout.write(table)
    out_path = Path(args.out) if args.out else Path(args.log_dir) / "summary.json"
    out_path.write_text(
        json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"summary written to {out_path}")
    return 0


def cmd_scaling(args) -> int:
    logs = metrics.load_log_dir(args.log_dir)
    points = metrics.scaling_table(logs, max_k=args.max_k)
    sys.stdout.write(metrics.render_scaling_table(points))
    out_path = Path(args.out) if args.out else Path(args.log_dir) / "scaling.csv"
    lines = ["k,call_pass_at_k,exec_pass_at_k"]
    lines.extend(
        f"{p.k},{p.call_pass_at_k:.6f},{p.exec_pass_at_k:.6f}" for p in points
    )
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"scaling data written to {out_path}")
    return 0


def cmd_retrieve(args) -> int:
    query = Path(args.query_file).read_text(encoding="utf-8")
    corpus = load_corpus(args.corpus)
    exclude = frozenset(args.exclude or [])
    winner = retrieve_top1(query, corpus, exclude=exclude)
    if winner is None:
        print("no eligible corpus entry")
        return 1
    from .retrieval import similarity

    score = similarity(tokenize_code(query), tokenize_code(winner.code))
    print(f"{winner.entry_id}\t{score:.4f}")
    return 0


def cmd_validate(args) -> int:
    status = 0
    if args.config:
        try:
            load_config(args.config)
            print(f"config {args.config}: ok")
        except (ParseError, ValidationError) as exc:
            _print_violations(f"config {args.config}", exc)
            status = 2
    if args.benchmark:
        try:
            manifest = load_manifest(args.benchmark)
            print(f"benchmark {args.benchmark}: ok ({len(manifest.tasks)} tasks)")
            for task in manifest.tasks:
                for violation in validate_task(task):
                    print(f"  {violation}")
        except (ParseError, ValidationError) as exc:
            _print_violations(f"benchmark {args.benchmark}", exc)
            status = 2
    if not args.config and not args.benchmark:
        print("nothing to validate; pass --config and/or --benchmark")
        status = 2
    return status


def _print_violations(subject: str, exc: Exception) -> None:
    print(f"{subject}: INVALID")
    if isinstance(exc, ValidationError):
        for violation in exc.violations:
            print(f"  {violation}")
    else:
        print(f"  {exc}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelforge",
        description="Agentic GPU-kernel generation engine and evaluation harness",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark sweep")
    run.add_argument("--config", required=True, help="engine config file")
    run.add_argument("--benchmark", required=True, help="benchmark manifest file")
    run.add_argument("--out", required=True, help="output directory for logs")
    run.add_argument("--replicas", type=int, default=1)
    run.add_argument("--iterations", type=int, default=None,
                     help="override agent max_iterations")
    run.add_argument("--workers", type=int, default=None,
                     help="cap on concurrently running replicas")
    run.add_argument("--ablate", action="append", default=[],
                     choices=sorted(ABLATIONS), help="disable one module")
    run.add_argument("--trace", action="store_true",
                     help="log request/response bodies (credentials redacted)")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="compute metric tables from logs")
    rep.add_argument("log_dir", help="directory holding replica_*.jsonl logs")
    rep.add_argument("--group", choices=("difficulty", "none"), default="difficulty")
    rep.add_argument("--conditional-exec", action="store_true",
                     help="use call-ok tasks as the execution-accuracy denominator")
    rep.add_argument("--out", default=None, help="summary JSON path")
    rep.set_defaults(func=cmd_report)

    sca = sub.add_parser("scaling", help="pass@k scaling table across replicas")
    sca.add_argument("log_dir")
    sca.add_argument("--max-k", type=int, required=True)
    sca.add_argument("--out", default=None, help="plot-ready CSV path")
    sca.set_defaults(func=cmd_scaling)

    ret = sub.add_parser("retrieve", help="find the closest corpus exemplar")
    ret.add_argument("--query-file", required=True)
    ret.add_argument("--corpus", required=True)
    ret.add_argument("--exclude", action="append", default=[],
                     help="corpus ids to skip (repeatable)")
    ret.set_defaults(func=cmd_retrieve)

    val = sub.add_parser("validate", help="validate config and benchmark files")
    val.add_argument("--config", default=None)
    val.add_argument("--benchmark", default=None)
    val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "trace", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        _print_violations("input", exc)
        return 2
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

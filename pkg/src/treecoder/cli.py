"""Command-line interface.

Subcommands: run (single prompt), bench (suite with rounds), sweep
(hyperparameter table), report (token comparison). Values come from an
optional YAML config file, overridable by flags.

Exit codes: 0 completed, 1 completed with task aborts, 2 configuration or
infrastructure error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import yaml

from . import harness
from .errors import ConfigError, ProviderError, SuiteFormatError, TreecoderError, WorkflowAborted
from .memory import MemoryConfig, MemoryStore, MergeStrategy
from .model import TreeConfig
from .orchestrator import EngineServices, Orchestrator
from .providers import HashedBagOfTokensEmbedder, LiveProvider, LiveProviderConfig, ScriptedProvider
from .providers.live import LiveEmbedder
from .sandbox import Sandbox, SandboxLimits
from .trace import write_jsonl
from .verify import Verifier

EXIT_OK = 0
EXIT_ABORTS = 1
EXIT_CONFIG = 2


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must be a mapping")
    return doc


def _pick(args_value, file_section: dict, key: str, default):
    if args_value is not None:
        return args_value
    if key in file_section:
        return file_section[key]
    return default


def _tree_config(args, cfg: dict) -> TreeConfig:
    tree = cfg.get("tree", {})
    return TreeConfig(
        max_height=int(_pick(args.max_height, tree, "max_height", 3)),
        initial_degree=int(_pick(args.initial_degree, tree, "initial_degree", 3)),
        degree_decay=int(_pick(args.degree_decay, tree, "degree_decay", 1)),
        max_verify_retries=int(_pick(args.max_verify_retries, tree, "max_verify_retries", 3)),
        max_clarification_rounds=int(
            _pick(args.clarification_rounds, tree, "max_clarification_rounds", 1)
        ),
        max_structure_corrections=int(
            _pick(args.structure_corrections, tree, "max_structure_corrections", 1)
        ),
    )


def _provider(args, cfg: dict):
    section = cfg.get("provider", {})
    kind = _pick(args.provider, section, "kind", "scripted")
    if kind == "scripted":
        script = _pick(args.script, section, "script", None)
        if not script:
            raise ConfigError("scripted provider needs --script (or provider.script in config)")
        return ScriptedProvider.from_file(script), kind
    if kind == "live":
        endpoint = _pick(args.endpoint, section, "endpoint", None)
        model = _pick(args.model, section, "model", None)
        if not endpoint or not model:
            raise ConfigError("live provider needs --endpoint and --model")
        live_config = LiveProviderConfig(
            endpoint=endpoint,
            model=model,
            api_key_env=_pick(args.api_key_env, section, "api_key_env", "TREECODER_API_KEY"),
            timeout_seconds=float(_pick(None, section, "timeout_seconds", 60.0)),
            max_retries=int(_pick(None, section, "max_retries", 2)),
            embedding_model=_pick(args.embedding_model, section, "embedding_model", ""),
            rate_limit_per_second=section.get("rate_limit_per_second"),
        )
        return LiveProvider(live_config), kind
    raise ConfigError(f"unknown provider kind: {kind!r}")


def _memory(args, cfg: dict) -> MemoryStore | None:
    section = cfg.get("memory", {})
    enabled = _pick(args.memory, section, "enabled", True)
    if isinstance(enabled, str):
        enabled = enabled == "on"
    if not enabled:
        return None
    memory_config = MemoryConfig(
        similarity_threshold=float(
            _pick(args.similarity_threshold, section, "similarity_threshold", 0.75)
        ),
        retrieval_limit=int(_pick(args.retrieval_limit, section, "retrieval_limit", 3)),
        depth_window=int(_pick(args.depth_window, section, "depth_window", 1)),
        merge_strategy=MergeStrategy(
            _pick(args.merge_strategy, section, "merge_strategy", "newest_wins")
        ),
    )
    embedder_kind = section.get("embedder", "hashed")
    if embedder_kind == "live":
        live_section = cfg.get("provider", {})
        live_config = LiveProviderConfig(
            endpoint=live_section.get("endpoint", ""),
            model=live_section.get("model", ""),
            api_key_env=live_section.get("api_key_env", "TREECODER_API_KEY"),
            embedding_model=live_section.get("embedding_model", ""),
        )
        embedder = LiveEmbedder(live_config, int(section.get("embedder_dimension", 1536)))
    else:
        embedder = HashedBagOfTokensEmbedder(int(section.get("embedder_dimension", 256)))
    snapshot = section.get("snapshot")
    if snapshot and Path(snapshot).exists():
        return MemoryStore.load(snapshot, embedder, config=memory_config)
    return MemoryStore(embedder, memory_config)


def _sandbox(args, cfg: dict) -> Sandbox:
    section = cfg.get("sandbox", {})
    limits = SandboxLimits(
        timeout_seconds=float(_pick(args.timeout_seconds, section, "timeout_seconds", 10.0)),
        grace_seconds=float(_pick(None, section, "grace_seconds", 2.0)),
        stream_cap_bytes=int(_pick(None, section, "stream_cap_bytes", 1_000_000)),
        stderr_excerpt_bytes=int(_pick(None, section, "stderr_excerpt_bytes", 4096)),
    )
    command = section.get("command")
    return Sandbox(limits, tuple(command) if command else None)


def _services(args, cfg):
    provider, kind = _provider(args, cfg)
    sandbox = _sandbox(args, cfg)
    memory = _memory(args, cfg)
    services = EngineServices(
        completion=provider, validator=Verifier(sandbox), memory=memory
    )
    # Scripted runs keep the default zero clock so traces are byte-stable.
    clock = time.time if kind == "live" else None
    return services, sandbox, clock


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file; flags override it")
    parser.add_argument("--provider", choices=["scripted", "live"])
    parser.add_argument("--script", help="scripted provider table (YAML)")
    parser.add_argument("--endpoint", help="live provider base URL")
    parser.add_argument("--model", help="live provider model name")
    parser.add_argument("--api-key-env", dest="api_key_env")
    parser.add_argument("--embedding-model", dest="embedding_model")
    parser.add_argument("-m", "--max-height", dest="max_height", type=int)
    parser.add_argument("-n", "--initial-degree", dest="initial_degree", type=int)
    parser.add_argument("-k", "--degree-decay", dest="degree_decay", type=int)
    parser.add_argument("-r", "--max-verify-retries", dest="max_verify_retries", type=int)
    parser.add_argument("--clarification-rounds", dest="clarification_rounds", type=int)
    parser.add_argument("--structure-corrections", dest="structure_corrections", type=int)
    parser.add_argument("--memory", choices=["on", "off"])
    parser.add_argument("--merge-strategy", dest="merge_strategy", choices=["newest_wins", "consolidate"])
    parser.add_argument("--similarity-threshold", dest="similarity_threshold", type=float)
    parser.add_argument("--retrieval-limit", dest="retrieval_limit", type=int)
    parser.add_argument("--depth-window", dest="depth_window", type=int)
    parser.add_argument("--timeout-seconds", dest="timeout_seconds", type=float)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--parallel-siblings", action="store_true")
    parser.add_argument("--parallel-tasks", action="store_true")
    parser.add_argument("--no-log-prompts", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treecoder")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a single prompt")
    run.add_argument("prompt")
    run.add_argument("--task-id", dest="task_id", default="")
    run.add_argument("--code-out", dest="code_out")
    run.add_argument("--trace-out", dest="trace_out")
    _add_common_flags(run)

    bench = sub.add_parser("bench", help="run a benchmark suite")
    bench.add_argument("--suite", required=True)
    bench.add_argument("--rounds", type=int, default=1)
    bench.add_argument("--scoring-mode", dest="scoring_mode", choices=["class", "testcase"], default="class")
    bench.add_argument("--report-out", dest="report_out")
    bench.add_argument("--trace-dir", dest="trace_dir")
    _add_common_flags(bench)

    swp = sub.add_parser("sweep", help="sweep one tree hyperparameter")
    swp.add_argument("--param", required=True, choices=["max-height", "initial-degree"])
    swp.add_argument("--values", required=True, help="comma-separated integers, e.g. 1,2,3")
    swp.add_argument("--suite", required=True)
    swp.add_argument("--scoring-mode", dest="scoring_mode", choices=["class", "testcase"], default="class")
    swp.add_argument("--out")
    _add_common_flags(swp)

    rep = sub.add_parser("report", help="compare token usage between report sets")
    rep.add_argument("--reports", nargs="+", required=True)
    rep.add_argument("--baseline", nargs="+", required=True)
    rep.add_argument("--out")
    return parser


def _load_reports(paths) -> list[harness.RunReport]:
    reports = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    reports.append(harness.RunReport.from_dict(json.loads(line)))
    return reports


def _cmd_run(args) -> int:
    cfg = _load_config_file(args.config)
    config = _tree_config(args, cfg)
    services, _, clock = _services(args, cfg)
    orchestrator = Orchestrator(
        config,
        services,
        parallel_children=args.parallel_siblings,
        log_prompts=not args.no_log_prompts,
        clock=clock,
    )
    try:
        artifact, run_trace = orchestrator.run(args.prompt, task_id=args.task_id)
    except WorkflowAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        if args.trace_out and exc.trace is not None:
            Path(args.trace_out).write_text(exc.trace.to_jsonl(), encoding="utf-8")
        return EXIT_ABORTS
    if args.trace_out:
        Path(args.trace_out).write_text(run_trace.to_jsonl(), encoding="utf-8")
    if args.code_out:
        Path(args.code_out).write_text(artifact.code, encoding="utf-8")
    else:
        print(artifact.code)
    totals = run_trace.totals()
    print(
        f"verified={artifact.verified} tests_run={artifact.tests_run} "
        f"fix_iterations={artifact.fix_iterations} "
        f"tokens(in/out)={totals.input_tokens}/{totals.output_tokens} "
        f"calls={totals.completion_calls}",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = _load_config_file(args.config)
    config = _tree_config(args, cfg)
    services, scoring_sandbox, clock = _services(args, cfg)
    suite = harness.load_suite(args.suite)
    collected: list[tuple[str, object]] = []

    def sink(task_id: str, round_index: int, run_trace) -> None:
        collected.append((f"round{round_index}_{task_id}", run_trace))

    reports = harness.run_suite(
        suite,
        config,
        services,
        scoring_sandbox,
        rounds=args.rounds,
        seed=args.seed,
        scoring_mode=args.scoring_mode,
        clock=clock,
        log_prompts=not args.no_log_prompts,
        parallel_tasks=args.parallel_tasks,
        parallel_children=args.parallel_siblings,
        trace_sink=sink if args.trace_dir else None,
    )
    if args.trace_dir:
        write_jsonl(collected, args.trace_dir)
    payload = "".join(report.to_json() for report in reports)
    if args.report_out:
        Path(args.report_out).write_text(payload, encoding="utf-8")
    aborts = 0
    for report in reports:
        aborts += sum(1 for row in report.per_task if row.aborted)
        print(
            f"round {report.round_index}: pass@1={report.pass_at_1:.4f} "
            f"tokens(in/out)={report.totals.input_tokens}/{report.totals.output_tokens} "
            f"calls={report.totals.completion_calls} embeds={report.totals.embedding_calls}"
        )
    if services.memory is not None:
        stats = services.memory.stats()
        print(
            f"memory: size={stats.size} merges={stats.total_merges} "
            f"depths={dict(sorted(stats.depth_histogram.items()))}"
        )
        snapshot = cfg.get("memory", {}).get("snapshot")
        if snapshot:
            services.memory.save(snapshot)
    if aborts:
        print(f"{aborts} task run(s) aborted", file=sys.stderr)
        return EXIT_ABORTS
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config_file(args.config)
    config = _tree_config(args, cfg)
    services, scoring_sandbox, clock = _services(args, cfg)
    suite = harness.load_suite(args.suite)
    param = args.param.replace("-", "_")
    values = [int(v) for v in args.values.split(",") if v.strip()]
    table = harness.sweep(
        param,
        values,
        suite,
        config,
        services,
        scoring_sandbox,
        seed=args.seed,
        scoring_mode=args.scoring_mode,
        clock=clock,
    )
    if args.out:
        Path(args.out).write_text(table.to_json(), encoding="utf-8")
    print(f"{param:>16}  pass@1   in_tokens  out_tokens  calls  nodes")
    for row in table.rows:
        print(
            f"{row.value:>16}  {row.pass_at_1:.4f}  {row.totals.input_tokens:>9}  "
            f"{row.totals.output_tokens:>10}  {row.totals.completion_calls:>5}  {row.node_count:>5}"
        )
    if any(row.aborted_tasks for row in table.rows):
        return EXIT_ABORTS
    return EXIT_OK


def _cmd_report(args) -> int:
    reports = _load_reports(args.reports)
    baseline = _load_reports(args.baseline)
    try:
        comparison = harness.report_tokens(reports, baseline)
    except ValueError as exc:
        print(f"cannot compare: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        Path(args.out).write_text(comparison.to_json(), encoding="utf-8")
    print("round  d_input  d_output  d_calls  d_embeds")
    for delta in comparison.deltas:
        print(
            f"{delta.round_index:>5}  {delta.input_delta:>7}  {delta.output_delta:>8}  "
            f"{delta.completion_calls_delta:>7}  {delta.embedding_calls_delta:>8}"
        )
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "bench": _cmd_bench,
        "sweep": _cmd_sweep,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, SuiteFormatError, ProviderError, TreecoderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

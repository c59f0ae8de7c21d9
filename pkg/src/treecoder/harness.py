"""Benchmark harness: loads task suites, runs the engine per task, scores
solutions against hidden tests, manages rounds (memory reset plus seeded
order shuffling), and produces token/efficiency reports and hyperparameter
sweeps.

Hidden tests never enter a model prompt; the engine's own generated suites
play no role in scoring.
"""

from __future__ import annotations

import dataclasses
import json
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from . import trace as tracing
from .errors import ConfigError, SandboxInfraError, SuiteFormatError, WorkflowAborted
from .model import SolutionArtifact, TokenUsage, TreeConfig
from .orchestrator import EngineServices, Orchestrator
from .sandbox import Sandbox, Verdict
from .trace import RunTrace
from .verify import SuiteSource, TestSuite

# In testcase scoring mode, hidden tests split into independent cases on
# lines of this shape.
CASE_DELIMITER = re.compile(r"^\s*#\s*---+\s*$", re.MULTILINE)

SCORING_CLASS = "class"
SCORING_TESTCASE = "testcase"


@dataclass(frozen=True)
class BenchmarkTask:
    task_id: str
    prompt: str
    entry_point: str = ""
    hidden_tests: str = ""
    tags: tuple[str, ...] = ()


def load_suite(path: str | Path) -> list[BenchmarkTask]:
    """Line-delimited JSON, one task per line."""
    tasks = []
    seen = set()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SuiteFormatError(f"{path}:{lineno}: bad JSON: {exc}") from None
        try:
            task = BenchmarkTask(
                task_id=str(obj["task_id"]),
                prompt=str(obj["prompt"]),
                entry_point=str(obj.get("entry_point", "")),
                hidden_tests=str(obj.get("hidden_tests", "")),
                tags=tuple(obj.get("tags", ())),
            )
        except KeyError as exc:
            raise SuiteFormatError(f"{path}:{lineno}: missing field {exc}") from None
        if task.task_id in seen:
            raise SuiteFormatError(f"{path}:{lineno}: duplicate task_id {task.task_id!r}")
        seen.add(task.task_id)
        tasks.append(task)
    if not tasks:
        raise SuiteFormatError(f"{path}: suite is empty")
    return tasks


@dataclass(frozen=True)
class TreeStats:
    node_count: int
    max_height: int
    revisions: int
    clarifications: int


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    passed: bool
    usage: TokenUsage
    tree_stats: TreeStats
    aborted: bool = False
    infra_error: bool = False
    case_fraction: float | None = None


@dataclass(frozen=True)
class RunReport:
    per_task: tuple[TaskResult, ...]
    pass_at_1: float
    totals: TokenUsage
    round_index: int
    task_order_seed: int

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "task_order_seed": self.task_order_seed,
            "pass_at_1": self.pass_at_1,
            "totals": dataclasses.asdict(self.totals),
            "per_task": [
                {
                    "task_id": r.task_id,
                    "passed": r.passed,
                    "aborted": r.aborted,
                    "infra_error": r.infra_error,
                    "case_fraction": r.case_fraction,
                    "usage": dataclasses.asdict(r.usage),
                    "tree_stats": dataclasses.asdict(r.tree_stats),
                }
                for r in self.per_task
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> RunReport:
        rows = tuple(
            TaskResult(
                task_id=row["task_id"],
                passed=row["passed"],
                aborted=row.get("aborted", False),
                infra_error=row.get("infra_error", False),
                case_fraction=row.get("case_fraction"),
                usage=TokenUsage(**row["usage"]),
                tree_stats=TreeStats(**row["tree_stats"]),
            )
            for row in obj["per_task"]
        )
        return cls(
            per_task=rows,
            pass_at_1=obj["pass_at_1"],
            totals=TokenUsage(**obj["totals"]),
            round_index=obj["round_index"],
            task_order_seed=obj["task_order_seed"],
        )


def task_order(count: int, seed: int, round_index: int) -> list[int]:
    """Shuffled index order, a pure function of (seed, round_index)."""
    order = list(range(count))
    random.Random(f"{seed}:{round_index}").shuffle(order)
    return order


def split_cases(hidden_tests: str) -> list[str]:
    cases = [part.strip() for part in CASE_DELIMITER.split(hidden_tests)]
    return [c for c in cases if c] or [hidden_tests]


def score_task(
    artifact: SolutionArtifact,
    task: BenchmarkTask,
    sandbox: Sandbox,
    scoring_mode: str = SCORING_CLASS,
) -> tuple[bool, float | None, bool]:
    """Run the artifact against the task's hidden tests.

    Returns (passed, case_fraction, infra_error). In class mode the whole
    hidden suite must pass; in testcase mode the suite is split into
    independent cases and the fraction is reported, with passed meaning
    every case passed.
    """
    suite = TestSuite(SuiteSource.HARNESS_PROVIDED, task.hidden_tests or "pass", task.entry_point)
    try:
        if scoring_mode == SCORING_TESTCASE:
            cases = split_cases(suite.test_code)
            passes = sum(
                1 for case in cases if sandbox.run(artifact.code, case).verdict is Verdict.PASS
            )
            fraction = passes / len(cases)
            return passes == len(cases), fraction, False
        result = sandbox.run(artifact.code, suite.test_code)
        return result.verdict is Verdict.PASS, None, False
    except SandboxInfraError:
        return False, None, True


def _tree_stats(trace: RunTrace) -> TreeStats:
    enters = trace.events(tracing.NODE_ENTER)
    max_height = max((e.data["height"] for e in enters), default=0)
    return TreeStats(
        node_count=len(enters),
        max_height=max_height,
        revisions=len(trace.events(tracing.SUBTREE_REVISION)),
        clarifications=len(trace.events(tracing.CLARIFICATION)),
    )


def _run_one_task(
    task: BenchmarkTask,
    round_index: int,
    config: TreeConfig,
    services: EngineServices,
    scoring_sandbox: Sandbox,
    scoring_mode: str,
    clock,
    log_prompts: bool,
    parallel_children: bool,
    trace_sink,
) -> TaskResult:
    orchestrator = Orchestrator(
        config,
        services,
        clock=clock,
        log_prompts=log_prompts,
        parallel_children=parallel_children,
    )
    aborted = False
    artifact: SolutionArtifact | None = None
    try:
        artifact, run_trace = orchestrator.run(task.prompt, task_id=task.task_id)
    except WorkflowAborted as exc:
        aborted = True
        run_trace = exc.trace if exc.trace is not None else RunTrace()
    if trace_sink is not None:
        trace_sink(task.task_id, round_index, run_trace)
    passed, fraction, infra = False, None, False
    if not aborted and artifact is not None:
        passed, fraction, infra = score_task(artifact, task, scoring_sandbox, scoring_mode)
    return TaskResult(
        task_id=task.task_id,
        passed=passed,
        usage=run_trace.totals(),
        tree_stats=_tree_stats(run_trace),
        aborted=aborted,
        infra_error=infra,
        case_fraction=fraction,
    )


def run_suite(
    suite: list[BenchmarkTask],
    config: TreeConfig,
    services: EngineServices,
    scoring_sandbox: Sandbox,
    *,
    rounds: int = 1,
    seed: int = 0,
    scoring_mode: str = SCORING_CLASS,
    clock: Callable[[], float] | None = None,
    log_prompts: bool = True,
    parallel_tasks: bool = False,
    parallel_children: bool = False,
    trace_sink: Callable[[str, int, RunTrace], None] | None = None,
) -> list[RunReport]:
    """One report per round. Memory is cleared at the start of every round
    and the task order is reshuffled from (seed, round). A run that aborts
    (provider failure) scores as not passed and is flagged, never skipped.

    Tasks run sequentially by default because memory is order-sensitive;
    ``parallel_tasks`` is allowed only with memory disabled.
    """
    if not suite:
        raise SuiteFormatError("suite is empty")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if parallel_tasks and services.memory is not None:
        raise ConfigError("parallel task execution requires memory to be disabled")
    reports = []
    for round_index in range(rounds):
        if services.memory is not None:
            services.memory.reset()
        order = task_order(len(suite), seed, round_index)

        def run_one(task_index: int) -> TaskResult:
            return _run_one_task(
                suite[task_index],
                round_index,
                config,
                services,
                scoring_sandbox,
                scoring_mode,
                clock,
                log_prompts,
                parallel_children,
                trace_sink,
            )

        if parallel_tasks:
            with ThreadPoolExecutor(max_workers=min(8, len(order))) as pool:
                rows = list(pool.map(run_one, order))
        else:
            rows = [run_one(i) for i in order]
        totals = TokenUsage()
        for row in rows:
            totals = totals + row.usage
        reports.append(
            RunReport(
                per_task=tuple(rows),
                pass_at_1=sum(1 for r in rows if r.passed) / len(rows),
                totals=totals,
                round_index=round_index,
                task_order_seed=seed,
            )
        )
    return reports


@dataclass(frozen=True)
class SweepRow:
    value: int
    pass_at_1: float
    totals: TokenUsage
    node_count: int
    aborted_tasks: int


@dataclass(frozen=True)
class SweepTable:
    param: str
    rows: tuple[SweepRow, ...]

    def to_dict(self) -> dict:
        return {
            "param": self.param,
            "rows": [
                {
                    "value": row.value,
                    "pass_at_1": row.pass_at_1,
                    "totals": dataclasses.asdict(row.totals),
                    "node_count": row.node_count,
                    "aborted_tasks": row.aborted_tasks,
                }
                for row in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


SWEEPABLE = ("max_height", "initial_degree")


def sweep(
    param: str,
    values: Iterable[int],
    suite: list[BenchmarkTask],
    config: TreeConfig,
    services: EngineServices,
    scoring_sandbox: Sandbox,
    *,
    seed: int = 0,
    scoring_mode: str = SCORING_CLASS,
    clock: Callable[[], float] | None = None,
) -> SweepTable:
    """Re-run the suite once per parameter value, everything else fixed.
    Per-value failures are recorded in the row; the sweep continues."""
    if param not in SWEEPABLE:
        raise ValueError(f"sweep param must be one of {SWEEPABLE}, got {param!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for value in values:
        swept = dataclasses.replace(config, **{param: value})
        reports = run_suite(
            suite,
            swept,
            services,
            scoring_sandbox,
            rounds=1,
            seed=seed,
            scoring_mode=scoring_mode,
            clock=clock,
        )
        report = reports[0]
        rows.append(
            SweepRow(
                value=value,
                pass_at_1=report.pass_at_1,
                totals=report.totals,
                node_count=sum(r.tree_stats.node_count for r in report.per_task),
                aborted_tasks=sum(1 for r in report.per_task if r.aborted),
            )
        )
    return SweepTable(param=param, rows=tuple(rows))


@dataclass(frozen=True)
class TokenDelta:
    round_index: int
    subject: TokenUsage
    baseline: TokenUsage

    @property
    def input_delta(self) -> int:
        return self.subject.input_tokens - self.baseline.input_tokens

    @property
    def output_delta(self) -> int:
        return self.subject.output_tokens - self.baseline.output_tokens

    @property
    def completion_calls_delta(self) -> int:
        return self.subject.completion_calls - self.baseline.completion_calls

    @property
    def embedding_calls_delta(self) -> int:
        return self.subject.embedding_calls - self.baseline.embedding_calls


@dataclass(frozen=True)
class TokenComparison:
    deltas: tuple[TokenDelta, ...]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "round_index": d.round_index,
                    "subject": dataclasses.asdict(d.subject),
                    "baseline": dataclasses.asdict(d.baseline),
                    "input_delta": d.input_delta,
                    "output_delta": d.output_delta,
                    "completion_calls_delta": d.completion_calls_delta,
                    "embedding_calls_delta": d.embedding_calls_delta,
                }
                for d in self.deltas
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def report_tokens(reports: list[RunReport], baseline: list[RunReport]) -> TokenComparison:
    """Per-round token totals and deltas (e.g. memory-on vs memory-off).
    Both report sets must cover the same suite in the same order."""
    if len(reports) != len(baseline):
        raise ValueError("report sets have different round counts")
    deltas = []
    for subject, base in zip(reports, baseline):
        if subject.task_order_seed != base.task_order_seed:
            raise ValueError("report sets were produced with different seeds")
        subject_ids = [r.task_id for r in subject.per_task]
        base_ids = [r.task_id for r in base.per_task]
        if subject_ids != base_ids:
            raise ValueError("report sets cover different suites or orderings")
        deltas.append(
            TokenDelta(round_index=subject.round_index, subject=subject.totals, baseline=base.totals)
        )
    return TokenComparison(deltas=tuple(deltas))

"""Shared test fixtures: scripted-table builders for whole trees and an
in-process sandbox stand-in so structural tests never spawn subprocesses."""

from __future__ import annotations

import random

from treecoder import (
    EngineServices,
    NodePath,
    ScriptedProvider,
    ScriptEntry,
    TreeConfig,
    Verifier,
    degree_at,
)
from treecoder.sandbox import SandboxLimits, SandboxResult, Verdict

PASS_SUITE = "```\nassert True\n```"


def plan_text(path_key: str) -> str:
    return f"1. solve {path_key}\nVERDICT: PROCEED"


def code_for(path_key: str) -> str:
    name = path_key.replace(".", "_") if path_key != "root" else "root"
    return f"def fn_{name}():\n    return {path_key!r}\n"


def implement_text(path_key: str) -> str:
    return f"```python\n{code_for(path_key)}```"


def bullet_list(descriptions) -> str:
    return "\n".join(f"- {d}" for d in descriptions)


class FakeSandbox:
    """Sandbox double returning a scripted verdict sequence (Pass once the
    sequence is exhausted). Tracks run count for loop-shape oracles."""

    def __init__(self, verdicts=()):
        self.limits = SandboxLimits()
        self._verdicts = list(verdicts)
        self.runs = 0

    def run(self, code: str, test_code: str) -> SandboxResult:
        verdict = self._verdicts[self.runs] if self.runs < len(self._verdicts) else Verdict.PASS
        self.runs += 1
        failing = () if verdict is Verdict.PASS else ("AssertionError: scripted failure",)
        stderr = "" if verdict is Verdict.PASS else "AssertionError: scripted failure"
        return SandboxResult(verdict, "", stderr, failing, 0.001)

    def stderr_excerpt(self, stderr: str) -> str:
        budget = self.limits.stderr_excerpt_bytes
        raw = stderr.encode("utf-8")
        return stderr if len(raw) <= budget else raw[-budget:].decode("utf-8", errors="replace")


def tree_script(
    config: TreeConfig,
    want_fn=None,
    task: str = "",
) -> tuple[list[ScriptEntry], list[str]]:
    """Build a full script table for one deterministic tree run.

    ``want_fn(path, budget)`` decides how many subtasks each internal node
    proposes (may exceed the budget to exercise truncation); the default
    always proposes the full budget. Returns the entries plus the node
    paths the run is expected to enter, in depth-first order.
    """
    entries: list[ScriptEntry] = []
    expected: list[str] = []

    def visit(path: NodePath) -> None:
        key = path.key()
        expected.append(key)
        height = path.height
        budget = degree_at(height, config)
        entries.append(ScriptEntry(key, "plan", plan_text(key), task=task))
        kept = 0
        if height < config.max_height and budget >= 1:
            want = want_fn(path, budget) if want_fn else budget
            if want <= 0:
                content = "NONE"
            else:
                content = bullet_list(f"part {i} of {key}" for i in range(want))
            entries.append(ScriptEntry(key, "decompose", content, task=task))
            kept = min(want, budget)
            if kept:
                entries.append(ScriptEntry(key, "review", "VERDICT: ACCEPT", task=task))
        entries.append(ScriptEntry(key, "implement", implement_text(key), task=task))
        entries.append(ScriptEntry(key, "generate_tests", PASS_SUITE, task=task))
        for i in range(kept):
            visit(path.child(i))

    visit(NodePath())
    return entries, expected


def random_want_fn(seed: int):
    """Deterministic per-node fan-out choice, occasionally exceeding the
    budget so truncation paths get exercised."""
    rng = random.Random(seed)
    choices: dict[str, int] = {}

    def want(path: NodePath, budget: int) -> int:
        key = path.key()
        if key not in choices:
            choices[key] = rng.randint(0, budget + 1)
        return choices[key]

    return want


def make_services(entries, memory=None, sandbox=None) -> EngineServices:
    return EngineServices(
        completion=ScriptedProvider(entries),
        validator=Verifier(sandbox if sandbox is not None else FakeSandbox()),
        memory=memory,
    )

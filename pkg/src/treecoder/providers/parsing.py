"""Tolerant parsers for the structured shapes agents are asked to emit.

Each parser raises MalformedResponseError when the structure is missing;
the orchestrator then retries the call once with a reformat instruction
before falling back (phase-specific) so the engine stays total.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import MalformedResponseError

# Closing fence must sit at the start of a line, so backticks inside a code
# line don't terminate the block early.
_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+.-]*)[ \t]*\n(.*?\n)[ \t]*```", re.DOTALL)
_BULLET = re.compile(r"^\s*(?:[-*]|\d+[.)])\s+(.+?)\s*$")
_VERDICT = re.compile(r"^\s*VERDICT:\s*(.+?)\s*$")


def extract_code_block(text: str) -> str:
    """Inner text of the first fenced block, language tag stripped, bytes
    preserved. Without a fence the whole response is the code."""
    match = _FENCE.search(text)
    if match:
        return match.group(2)
    return text


@dataclass(frozen=True)
class PlanVerdict:
    proceed: bool
    question: str = ""


def parse_plan(text: str) -> tuple[str, PlanVerdict]:
    """Split a plan response into the step list and its verdict line.

    The verdict line is ``VERDICT: PROCEED`` or
    ``VERDICT: CLARIFY: <question>``; its absence is a malformed response.
    """
    verdict = None
    plan_lines = []
    for line in text.splitlines():
        match = _VERDICT.match(line)
        if match:
            verdict = match.group(1)
        else:
            plan_lines.append(line)
    if verdict is None:
        raise MalformedResponseError("plan response has no VERDICT line")
    plan = "\n".join(plan_lines).strip()
    upper = verdict.upper()
    if upper.startswith("PROCEED"):
        return plan, PlanVerdict(proceed=True)
    if upper.startswith("CLARIFY"):
        question = verdict[len("CLARIFY"):].lstrip(" :-").strip()
        return plan, PlanVerdict(proceed=False, question=question)
    raise MalformedResponseError(f"unrecognized plan verdict: {verdict!r}")


def parse_subtasks(text: str) -> list[str]:
    """Bullet or numbered lines, one subtask each; the single word NONE
    (or an empty response) means no delegation."""
    body = text
    match = _FENCE.search(text)
    if match:
        body = match.group(2)
    stripped = body.strip()
    if not stripped or stripped.upper() == "NONE":
        return []
    subtasks = []
    for line in stripped.splitlines():
        bullet = _BULLET.match(line)
        if bullet:
            subtasks.append(bullet.group(1))
    if not subtasks:
        raise MalformedResponseError("subtask response has neither bullets nor NONE")
    return subtasks


@dataclass(frozen=True)
class ReviewVerdict:
    accept: bool
    new_subtasks: tuple[str, ...] = ()


def parse_review(text: str) -> ReviewVerdict:
    """``VERDICT: ACCEPT`` keeps the children; ``VERDICT: REVISE`` must be
    followed by a replacement subtask list."""
    verdict = None
    rest = []
    for line in text.splitlines():
        match = _VERDICT.match(line)
        if match and verdict is None:
            verdict = match.group(1).upper()
        else:
            rest.append(line)
    if verdict is None:
        raise MalformedResponseError("review response has no VERDICT line")
    if verdict.startswith("ACCEPT"):
        return ReviewVerdict(accept=True)
    if verdict.startswith("REVISE"):
        subtasks = parse_subtasks("\n".join(rest))
        if not subtasks:
            raise MalformedResponseError("REVISE verdict without replacement subtasks")
        return ReviewVerdict(accept=False, new_subtasks=tuple(subtasks))
    raise MalformedResponseError(f"unrecognized review verdict: {verdict!r}")

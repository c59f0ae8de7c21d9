"""Prompt construction for every agent phase.

Templates are plain text resource files with $slot placeholders, kept under
templates/ so tests can pin rendered prompts byte-for-byte. Section
builders return "" when a section is empty, so e.g. a plan prompt carries
no memory header at all when retrieval found nothing.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template

TEMPLATE_VERSION = 1

ROOT_AUTO_ANSWER = "proceed with the most standard interpretation"

REFORMAT_INSTRUCTION = (
    "Your previous reply could not be parsed. Reply again following the "
    "required format exactly, with no extra commentary."
)

MEMORY_HEADER = "RELEVANT PAST EXPERIENCE:"

CHILD_CODE_HEADER_LINES = 40


@lru_cache(maxsize=None)
def _template(name: str) -> Template:
    text = resources.files("treecoder.templates").joinpath(f"{name}.txt").read_text("utf-8")
    return Template(text)


def render(name: str, **slots: str) -> str:
    return _template(name).substitute(**slots)


def parent_section(parent_context: str) -> str:
    if not parent_context:
        return ""
    return f"\nCONTEXT FROM PARENT:\n{parent_context}\n"


def memory_section(records) -> str:
    """Retrieved experiences, most similar first. Empty list, no section."""
    if not records:
        return ""
    blocks = []
    for i, record in enumerate(records, start=1):
        blocks.append(
            f"EXPERIENCE {i}: {record.description}\n"
            f"NOTES:\n{record.reasoning_trace}\n"
            f"CODE:\n{record.code}"
        )
    body = "\n\n".join(blocks)
    return f"\n{MEMORY_HEADER}\n{body}\n"


def clarification_section(exchanges) -> str:
    if not exchanges:
        return ""
    lines = []
    for question, answer in exchanges:
        lines.append(f"Q: {question}\nA: {answer}")
    return "\nCLARIFICATIONS:\n" + "\n".join(lines) + "\n"


def helpers_section(subtasks, child_results) -> str:
    """Child code blocks, verbatim, flagged verified or unverified. These
    definitions are prepended to the node's own code, so the prompt warns
    the model not to repeat them."""
    if not child_results:
        return ""
    blocks = []
    for i, (subtask, result) in enumerate(zip(subtasks, child_results), start=1):
        state = "verified" if result.verified else "UNVERIFIED, may be incorrect"
        blocks.append(f"HELPER {i} for subtask: {subtask.description} ({state}):\n{result.code}")
    body = "\n\n".join(blocks)
    return (
        "\nHELPERS ALREADY DEFINED (they will be placed above your code; "
        "do not repeat them):\n" + body + "\n"
    )


def child_summaries(subtasks, child_results, header_lines: int = CHILD_CODE_HEADER_LINES) -> str:
    """Review-phase digest: each subtask plus the head of its result code,
    not full bodies, to bound prompt growth."""
    blocks = []
    for i, (subtask, result) in enumerate(zip(subtasks, child_results), start=1):
        header = "\n".join(result.code.splitlines()[:header_lines])
        state = "verified" if result.verified else "failed verification"
        blocks.append(f"SUBTASK {i}: {subtask.description}\nRESULT ({state}):\n{header}")
    return "\n\n".join(blocks)


def plan_prompt(description: str, parent_context: str, memory: str, clarifications) -> str:
    return render(
        "plan",
        task_description=description,
        parent_section=parent_section(parent_context),
        memory_section=memory,
        clarification_section=clarification_section(clarifications),
    )


def decompose_prompt(description: str, plan: str, degree_budget: int) -> str:
    return render(
        "decompose",
        task_description=description,
        plan=plan,
        degree_budget=str(degree_budget),
    )


def implement_prompt(description: str, plan: str, subtasks, child_results) -> str:
    return render(
        "implement",
        task_description=description,
        plan=plan,
        helpers_section=helpers_section(subtasks, child_results),
    )


def clarify_answer_prompt(plan: str, subtask_description: str, question: str) -> str:
    return render(
        "clarify_answer",
        plan=plan,
        subtask_description=subtask_description,
        question=question,
    )


def review_prompt(description: str, plan: str, subtasks, child_results, degree_budget: int) -> str:
    return render(
        "review",
        task_description=description,
        plan=plan,
        child_summaries=child_summaries(subtasks, child_results),
        degree_budget=str(degree_budget),
    )


def generate_tests_prompt(task_description: str, code: str, entry_point: str) -> str:
    return render(
        "generate_tests",
        task_description=task_description,
        code=code,
        entry_point=entry_point or "the main function",
    )


def fix_errors_prompt(code: str, failing_cases, stderr_tail: str) -> str:
    cases = "\n".join(failing_cases) if failing_cases else "(none reported)"
    return render("fix_errors", code=code, failing_cases=cases, stderr_tail=stderr_tail)


def consolidate_prompt(existing, incoming) -> str:
    return render(
        "consolidate",
        existing_description=existing.description,
        existing_trace=existing.reasoning_trace,
        incoming_description=incoming.description,
        incoming_trace=incoming.reasoning_trace,
    )

"""Verification agent: generates a test suite for a candidate, runs it in
the sandbox, and debugs failures for a bounded number of iterations."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol

from . import prompts
from .model import SolutionArtifact
from .providers.base import ResponseKind
from .providers.parsing import extract_code_block
from .sandbox import Sandbox, SandboxResult, Verdict

_ENTRY_POINT = re.compile(r"^(?:def|class)\s+([A-Za-z_]\w*)", re.MULTILINE)

SMOKE_TEST = "# smoke test: accepting any code that loads cleanly\n"


class SuiteSource(str, Enum):
    MODEL_GENERATED = "model_generated"
    HARNESS_PROVIDED = "harness_provided"


@dataclass(frozen=True)
class TestSuite:
    __test__ = False  # not a pytest class, despite the name

    source: SuiteSource
    test_code: str
    entry_point: str = ""

    def __post_init__(self):
        if not self.test_code:
            raise ValueError("test suite must be non-empty")


class ModelCaller(Protocol):
    """Node-bound completion hook the orchestrator hands to the verifier;
    phase and round routing stay the engine's concern."""

    def call(self, phase: str, prompt: str, kind: ResponseKind) -> str: ...


def infer_entry_point(code: str) -> str:
    match = _ENTRY_POINT.search(code)
    return match.group(1) if match else ""


class Verifier:
    def __init__(self, sandbox: Sandbox):
        self.sandbox = sandbox

    def generate_tests(
        self,
        task_description: str,
        code: str,
        caller: ModelCaller,
        on_regenerate: Callable[[str], None] | None = None,
    ) -> TestSuite:
        """Ask the model for a suite targeting the code's entry point.

        A suite that does not even compile is regenerated once; if that
        also fails it is replaced by a trivial smoke test, so the
        validation phase never dies on its own test code.
        """
        entry_point = infer_entry_point(code)
        prompt = prompts.generate_tests_prompt(task_description, code, entry_point)
        for attempt in range(2):
            content = caller.call("generate_tests", prompt, ResponseKind.TEST_SUITE)
            test_code = extract_code_block(content)
            if test_code.strip() and self._loads(test_code):
                return TestSuite(SuiteSource.MODEL_GENERATED, test_code, entry_point)
            if attempt == 0 and on_regenerate is not None:
                on_regenerate("generated suite failed to load; regenerating once")
        return TestSuite(SuiteSource.MODEL_GENERATED, SMOKE_TEST, entry_point)

    @staticmethod
    def _loads(test_code: str) -> bool:
        try:
            compile(test_code, "<suite>", "exec")
            return True
        except SyntaxError:
            return False

    def verify(
        self,
        code: str,
        suite: TestSuite,
        retries: int,
        caller: ModelCaller,
    ) -> tuple[SolutionArtifact, list[SandboxResult]]:
        """Run-first debug loop: test the candidate, and while it fails and
        the retry budget lasts, ask for a repair and re-test it. The final
        repair is always re-tested, so the verified flag describes the code
        actually returned: up to r fixes means up to r+1 test runs.
        """
        if retries < 0:
            raise ValueError("retries must be >= 0")
        current = code
        results = [self.sandbox.run(current, suite.test_code)]
        fixes = 0
        while results[-1].verdict is not Verdict.PASS and fixes < retries:
            current = self.fix_errors(current, results[-1], caller)
            fixes += 1
            results.append(self.sandbox.run(current, suite.test_code))
        artifact = SolutionArtifact(
            code=current,
            verified=results[-1].verdict is Verdict.PASS,
            tests_run=len(results),
            fix_iterations=fixes,
        )
        return artifact, results

    def fix_errors(self, code: str, result: SandboxResult, caller: ModelCaller) -> str:
        """One repair call; an empty reply returns the input unchanged (the
        loop's counter still advances, so termination holds)."""
        excerpt = self.sandbox.stderr_excerpt(result.stderr)
        prompt = prompts.fix_errors_prompt(code, result.failing_cases, excerpt)
        content = caller.call("fix_errors", prompt, ResponseKind.CODE_BLOCK)
        repaired = extract_code_block(content)
        if not repaired.strip():
            return code
        return repaired

"""Subprocess sandbox for candidate code and its tests.

Each run gets a fresh temporary workspace, a wall-clock timeout, and
output-size caps. The child runs in its own session so the whole process
group can be reaped on timeout. This is test isolation, NOT a security
boundary against malicious code.

The target language is just a command template. The default template runs
a generated Python runner that loads the solution, prints a start marker,
then executes the tests in the same namespace. Custom commands must follow
the exit-code protocol: 0 = pass, 3 = crash while loading the solution,
anything else = test failure.
"""

from __future__ import annotations

import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import SandboxInfraError

SETUP_CRASH_EXIT = 3
TESTS_START_MARKER = "__TESTS_START__"

_RUNNER_SOURCE = f"""\
import sys, traceback

ns = {{"__name__": "__main__"}}
try:
    with open("solution.py", "r", encoding="utf-8") as fh:
        source = fh.read()
    exec(compile(source, "solution.py", "exec"), ns)
except BaseException:
    traceback.print_exc()
    sys.exit({SETUP_CRASH_EXIT})
sys.stdout.write("{TESTS_START_MARKER}\\n")
sys.stdout.flush()
try:
    with open("tests.py", "r", encoding="utf-8") as fh:
        tests = fh.read()
    exec(compile(tests, "tests.py", "exec"), ns)
except BaseException:
    traceback.print_exc()
    sys.exit(4)
"""

_FAILURE_LINE = re.compile(r"^(?:\w+\.)*(?:\w*(?:Error|Exception|Warning)|AssertionError)\b.*")


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    TIMEOUT = "timeout"
    CRASHED_SETUP = "crashed_setup"


@dataclass(frozen=True)
class SandboxLimits:
    timeout_seconds: float = 10.0
    grace_seconds: float = 2.0
    stream_cap_bytes: int = 1_000_000
    stderr_excerpt_bytes: int = 4096


@dataclass(frozen=True)
class SandboxResult:
    verdict: Verdict
    stdout: str
    stderr: str
    failing_cases: tuple[str, ...]
    wall_time: float


DEFAULT_COMMAND = (sys.executable, "{runner}")


class Sandbox:
    def __init__(self, limits: SandboxLimits | None = None, command: tuple[str, ...] | None = None):
        self.limits = limits or SandboxLimits()
        self.command = tuple(command) if command else DEFAULT_COMMAND

    def run(self, code: str, test_code: str) -> SandboxResult:
        workspace = Path(tempfile.mkdtemp(prefix="treecoder-sbx-"))
        try:
            solution = workspace / "solution.py"
            tests = workspace / "tests.py"
            runner = workspace / "_runner.py"
            solution.write_text(code, encoding="utf-8")
            tests.write_text(test_code, encoding="utf-8")
            runner.write_text(_RUNNER_SOURCE, encoding="utf-8")
            argv = [
                part.format(
                    runner=str(runner),
                    workspace=str(workspace),
                    solution=str(solution),
                    tests=str(tests),
                )
                for part in self.command
            ]
            return self._execute(argv, workspace)
        finally:
            shutil.rmtree(workspace, ignore_errors=True)

    def _execute(self, argv: list[str], workspace: Path) -> SandboxResult:
        limits = self.limits
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                argv,
                cwd=workspace,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                stdin=subprocess.DEVNULL,
                start_new_session=True,
            )
        except OSError as exc:
            raise SandboxInfraError(f"could not spawn sandbox process: {exc}") from exc
        timed_out = False
        try:
            out, err = proc.communicate(timeout=limits.timeout_seconds)
        except subprocess.TimeoutExpired:
            timed_out = True
            self._kill_group(proc)
            out, err = proc.communicate()
        finally:
            if proc.poll() is None:
                self._kill_group(proc)
                proc.wait()
        wall_time = time.monotonic() - start
        stdout = self._cap(out)
        stderr = self._cap(err)
        if timed_out:
            return SandboxResult(Verdict.TIMEOUT, stdout, stderr, (), wall_time)
        rc = proc.returncode
        if rc == 0:
            return SandboxResult(Verdict.PASS, stdout, stderr, (), wall_time)
        if rc == SETUP_CRASH_EXIT:
            cases = self._failing_cases(stderr, rc)
            return SandboxResult(Verdict.CRASHED_SETUP, stdout, stderr, cases, wall_time)
        return SandboxResult(Verdict.FAIL, stdout, stderr, self._failing_cases(stderr, rc), wall_time)

    @staticmethod
    def _kill_group(proc: subprocess.Popen) -> None:
        try:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass

    def _cap(self, raw: bytes | None) -> str:
        data = (raw or b"")[: self.limits.stream_cap_bytes]
        return data.decode("utf-8", errors="replace")

    @staticmethod
    def _failing_cases(stderr: str, returncode: int) -> tuple[str, ...]:
        cases = [line for line in stderr.splitlines() if _FAILURE_LINE.match(line.strip())]
        if not cases:
            cases = [f"process exited with code {returncode}"]
        return tuple(cases)

    def stderr_excerpt(self, stderr: str) -> str:
        """Final N bytes of stderr, for repair prompts."""
        budget = self.limits.stderr_excerpt_bytes
        raw = stderr.encode("utf-8")
        if len(raw) <= budget:
            return stderr
        return raw[-budget:].decode("utf-8", errors="replace")

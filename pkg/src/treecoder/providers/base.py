"""Provider interfaces: all generative-model and embedding access goes
through these two narrow surfaces so the control plane stays testable
offline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, runtime_checkable

from ..model import NodePath

NORM_TOLERANCE = 1e-9


class ResponseKind(str, Enum):
    """Structured shape the caller will parse out of the response."""

    FREE_TEXT = "free_text"
    PLAN_STEPS = "plan_steps"
    SUBTASK_LIST = "subtask_list"
    CODE_BLOCK = "code_block"
    TEST_SUITE = "test_suite"
    VERDICT_WITH_QUESTION = "verdict_with_question"


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad message role: {self.role!r}")


@dataclass(frozen=True)
class CompletionRequest:
    """One generation request. Temperature defaults to 0 and the harness
    pins it there for every experiment."""

    messages: tuple[Message, ...]
    temperature: float = 0.0
    response_kind: ResponseKind = ResponseKind.FREE_TEXT

    def __post_init__(self):
        if not self.messages:
            raise ValueError("completion request needs at least one message")

    @classmethod
    def from_prompt(
        cls,
        prompt: str,
        system: str = "",
        response_kind: ResponseKind = ResponseKind.FREE_TEXT,
        temperature: float = 0.0,
    ) -> CompletionRequest:
        messages: list[Message] = []
        if system:
            messages.append(Message("system", system))
        messages.append(Message("user", prompt))
        return cls(tuple(messages), temperature=temperature, response_kind=response_kind)

    def prompt_text(self) -> str:
        """Concatenation of all message contents, used for logging and for
        the hidden-test hygiene check."""
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class CompletionResponse:
    content: str
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass(frozen=True)
class CallKey:
    """Routing metadata the engine attaches to every completion call.

    ``round`` is the number of earlier calls with the same (path, phase)
    in this run, so scripted tables can distinguish a re-plan after
    clarification (round 1) from the original plan (round 0).
    ``task_id`` scopes lookups when one script file covers a whole suite.
    """

    path: NodePath = field(default_factory=NodePath)
    phase: str = "plan"
    round: int = 0
    task_id: str = ""

    def __str__(self) -> str:
        scope = f"{self.task_id}:" if self.task_id else ""
        return f"{scope}{self.path.key()}/{self.phase}#{self.round}"


@runtime_checkable
class CompletionProvider(Protocol):
    def complete(self, request: CompletionRequest, key: CallKey) -> CompletionResponse: ...


@dataclass(frozen=True)
class EmbeddingVector:
    """An L2-normalized embedding; cosine similarity is a plain dot
    product. One store keeps a single fixed dimension."""

    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("embedding must be non-empty")
        norm = math.sqrt(sum(v * v for v in self.values))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"embedding not L2-normalized (norm={norm})")

    @property
    def dimension(self) -> int:
        return len(self.values)

    def cosine(self, other: EmbeddingVector) -> float:
        if other.dimension != self.dimension:
            raise ValueError("dimension mismatch")
        return sum(a * b for a, b in zip(self.values, other.values))

    @classmethod
    def normalized(cls, raw: list[float]) -> EmbeddingVector:
        norm = math.sqrt(sum(v * v for v in raw))
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return cls(tuple(v / norm for v in raw))


@runtime_checkable
class EmbeddingProvider(Protocol):
    @property
    def identity(self) -> str: ...

    @property
    def dimension(self) -> int: ...

    def embed(self, text: str) -> EmbeddingVector: ...

"""Shared domain types: tree configuration, node identity, tasks, solutions,
and token accounting.

Everything here is a plain value type. Heights are 1-based: the root sits at
height 1, and a node at height equal to ``max_height`` is always a leaf.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import AccountingError, ConfigError

# Counters are stored as Python ints but anything past this bound indicates
# corrupted accounting, not real usage.
COUNTER_MAX = 2**63 - 1


@dataclass(frozen=True)
class TreeConfig:
    """Bounding hyperparameters for a run.

    ``max_height`` / ``initial_degree`` / ``degree_decay`` shape the tree;
    ``max_verify_retries`` bounds the debug loop. The two re-reasoning
    budgets are engine-level bounds so clarification and structure
    correction always terminate.
    """

    max_height: int = 3
    initial_degree: int = 3
    degree_decay: int = 1
    max_verify_retries: int = 3
    max_clarification_rounds: int = 1
    max_structure_corrections: int = 1

    def __post_init__(self):
        if self.max_height < 1:
            raise ConfigError(f"max_height must be >= 1, got {self.max_height}")
        if self.initial_degree < 1:
            raise ConfigError(f"initial_degree must be >= 1, got {self.initial_degree}")
        if self.degree_decay < 1:
            raise ConfigError(f"degree_decay must be >= 1, got {self.degree_decay}")
        if self.max_verify_retries < 0:
            raise ConfigError("max_verify_retries must be >= 0")
        if self.max_clarification_rounds < 0:
            raise ConfigError("max_clarification_rounds must be >= 0")
        if self.max_structure_corrections < 0:
            raise ConfigError("max_structure_corrections must be >= 0")


@dataclass(frozen=True, order=True)
class NodePath:
    """Root-relative child indices identifying one node.

    The empty path is the root. Paths render as dotted index strings
    ("0.2" = third child of the root's first child); the root renders as
    "root". These strings are the stable keys used by scripted providers
    and the trace log.
    """

    indices: tuple[int, ...] = ()

    @property
    def height(self) -> int:
        return len(self.indices) + 1

    @property
    def is_root(self) -> bool:
        return not self.indices

    def child(self, index: int) -> NodePath:
        if index < 0:
            raise ValueError("child index must be >= 0")
        return NodePath(self.indices + (index,))

    def parent(self) -> NodePath:
        if self.is_root:
            raise ValueError("root has no parent")
        return NodePath(self.indices[:-1])

    def is_within(self, ancestor: NodePath) -> bool:
        """True if this path equals ``ancestor`` or lies in its subtree."""
        n = len(ancestor.indices)
        return self.indices[:n] == ancestor.indices

    def key(self) -> str:
        if self.is_root:
            return "root"
        return ".".join(str(i) for i in self.indices)

    @classmethod
    def from_key(cls, key: str) -> NodePath:
        if key in ("root", ""):
            return cls()
        try:
            return cls(tuple(int(part) for part in key.split(".")))
        except ValueError:
            raise ValueError(f"bad node path key: {key!r}") from None

    def __str__(self) -> str:
        return self.key()


def degree_at(height: int, config: TreeConfig) -> int:
    """Child budget for a node at ``height``.

    Zero at or past the height bound; otherwise the initial degree reduced
    by the decay per level, clamped so it never goes negative.
    """
    if height < 1:
        raise ValueError("height is 1-based")
    if height >= config.max_height:
        return 0
    return max(0, config.initial_degree - config.degree_decay * (height - 1))


@dataclass(frozen=True)
class TaskSpec:
    """A unit of work handed to one code agent."""

    description: str
    parent_context: str = ""
    path: NodePath = field(default_factory=NodePath)
    degree_budget: int = 0


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0
    completion_calls: int = 0
    embedding_calls: int = 0

    def add(self, other: TokenUsage) -> TokenUsage:
        return merge_usage(self, other)

    def __add__(self, other: TokenUsage) -> TokenUsage:
        return merge_usage(self, other)


def merge_usage(a: TokenUsage, b: TokenUsage) -> TokenUsage:
    """Field-wise sum of two usage records."""
    merged = TokenUsage(
        input_tokens=a.input_tokens + b.input_tokens,
        output_tokens=a.output_tokens + b.output_tokens,
        completion_calls=a.completion_calls + b.completion_calls,
        embedding_calls=a.embedding_calls + b.embedding_calls,
    )
    for name in ("input_tokens", "output_tokens", "completion_calls", "embedding_calls"):
        if getattr(merged, name) > COUNTER_MAX:
            raise AccountingError(f"token counter {name} overflowed")
    return merged


@dataclass(frozen=True)
class SolutionArtifact:
    """What a node returns upward: code plus its verification record."""

    code: str
    reasoning_trace: str = ""
    verified: bool = False
    tests_run: int = 0
    fix_iterations: int = 0

    def with_trace(self, reasoning_trace: str) -> SolutionArtifact:
        return replace(self, reasoning_trace=reasoning_trace)


class NodeStatus(str, Enum):
    PLANNED = "planned"
    DELEGATING = "delegating"
    IMPLEMENTED = "implemented"
    VERIFIED = "verified"
    FAILED = "failed"


@dataclass
class NodeRecord:
    """One code agent's lifecycle state, mutated as it moves through the
    plan / delegate / implement / validate / return phases."""

    path: NodePath
    task: TaskSpec
    plan: str = ""
    subtasks: list[TaskSpec] = field(default_factory=list)
    child_results: list[SolutionArtifact] = field(default_factory=list)
    solution: SolutionArtifact | None = None
    clarifications: list[tuple[str, str]] = field(default_factory=list)
    structure_corrections: int = 0
    usage: TokenUsage = field(default_factory=TokenUsage)
    status: NodeStatus = NodeStatus.PLANNED

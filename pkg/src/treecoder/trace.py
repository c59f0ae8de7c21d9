"""Append-only run trace: one event per phase transition, model call,
clarification, revision, and sandbox run.

The trace is the contract for every structural test: tree-shape checks,
locality-of-correction oracles, and token recomputation all walk this log.
Events get a total order (``seq``) at append time. Timestamps come from an
injectable clock; scripted runs use the default zero clock so exports are
byte-identical across runs.
"""

from __future__ import annotations

import json
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

from .model import NodePath, TokenUsage, TreeConfig, degree_at

# Event kinds
RUN_START = "run_start"
RUN_END = "run_end"
NODE_ENTER = "node_enter"
NODE_EXIT = "node_exit"
PHASE = "phase"
MODEL_CALL = "model_call"
EMBED_CALL = "embed_call"
MEMORY_RETRIEVE = "memory_retrieve"
MEMORY_UPDATE = "memory_update"
CLARIFICATION = "clarification"
DELEGATE = "delegate"
DEGREE_TRUNCATION = "degree_truncation"
SUBTREE_REVISION = "subtree_revision"
CORRECTION_EXHAUSTED = "correction_exhausted"
SANDBOX_RUN = "sandbox_run"
VALIDATION = "validation"
WARNING = "warning"


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    ts: float
    kind: str
    path: str
    data: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "ts": self.ts, "kind": self.kind, "path": self.path, **self.data}


def _zero_clock() -> float:
    return 0.0


class RunTrace:
    """Thread-safe append-only event sequence."""

    def __init__(self, clock: Callable[[], float] | None = None):
        self._clock = clock or _zero_clock
        self._events: list[TraceEvent] = []
        self._lock = threading.Lock()

    def append(self, kind: str, path: NodePath | str = "", **data) -> TraceEvent:
        key = path.key() if isinstance(path, NodePath) else path
        with self._lock:
            event = TraceEvent(len(self._events), self._clock(), kind, key, data)
            self._events.append(event)
        return event

    def splice(self, other: RunTrace) -> None:
        """Re-append another trace's events here, in their order. Used to
        merge per-child buffers after parallel sibling execution so the
        final log still has one total order."""
        for event in other.events():
            self.append(event.kind, event.path, **event.data)

    def events(self, kind: str | None = None, path: str | None = None) -> list[TraceEvent]:
        with self._lock:
            snapshot = list(self._events)
        if kind is not None:
            snapshot = [e for e in snapshot if e.kind == kind]
        if path is not None:
            snapshot = [e for e in snapshot if e.path == path]
        return snapshot

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events())

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(e.to_dict(), sort_keys=True, separators=(",", ":"))
            for e in self.events()
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> RunTrace:
        trace = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("kind")
            path = obj.pop("path")
            obj.pop("seq")
            obj.pop("ts")
            trace.append(kind, path, **obj)
        return trace

    # Derived views used by the harness and by structural tests.

    def execution_counts(self) -> Counter:
        """How many times each node path was entered (re-executed subtrees
        enter the same path more than once)."""
        return Counter(e.path for e in self.events(NODE_ENTER))

    def totals(self) -> TokenUsage:
        """Recompute run totals from the per-call events themselves."""
        total = TokenUsage()
        for event in self.events(MODEL_CALL):
            total = total + TokenUsage(
                input_tokens=event.data["input_tokens"],
                output_tokens=event.data["output_tokens"],
                completion_calls=1,
            )
        for event in self.events(EMBED_CALL):
            total = total + TokenUsage(embedding_calls=event.data.get("calls", 1))
        return total


def validate_tree_shape(trace: RunTrace, config: TreeConfig) -> list[str]:
    """Post-hoc structural check: heights within bound, every delegation
    within its level's degree budget, children only under entered parents.
    Returns a list of violation descriptions; empty means the trace is
    shape-safe."""
    violations = []
    entered = {e.path for e in trace.events(NODE_ENTER)}
    for event in trace.events(NODE_ENTER):
        path = NodePath.from_key(event.path)
        if path.height > config.max_height:
            violations.append(f"node {event.path} at height {path.height} > max {config.max_height}")
        if not path.is_root and path.parent().key() not in entered:
            violations.append(f"node {event.path} entered without its parent")
    for event in trace.events(DELEGATE):
        path = NodePath.from_key(event.path)
        allowed = degree_at(path.height, config)
        count = event.data["count"]
        if count > allowed:
            violations.append(
                f"node {event.path} delegated {count} children, budget {allowed}"
            )
    return violations


def write_jsonl(traces: Iterable[tuple[str, RunTrace]], directory) -> None:
    """Write one ``<name>.trace.jsonl`` file per (name, trace) pair."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, trace in traces:
        (out / f"{name}.trace.jsonl").write_text(trace.to_jsonl(), encoding="utf-8")

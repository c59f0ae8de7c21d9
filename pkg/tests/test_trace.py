"""Trace log tests: ordering, serialization stability, shape validation."""

from treecoder import NodePath, TreeConfig
from treecoder.trace import (
    DELEGATE,
    MODEL_CALL,
    NODE_ENTER,
    RunTrace,
    validate_tree_shape,
)


def test_append_assigns_total_order():
    trace = RunTrace()
    first = trace.append(NODE_ENTER, NodePath(), height=1)
    second = trace.append(MODEL_CALL, NodePath(), phase="plan")
    assert (first.seq, second.seq) == (0, 1)
    assert first.ts == 0.0  # default deterministic clock


def test_custom_clock():
    ticks = iter([1.5, 2.5])
    trace = RunTrace(clock=lambda: next(ticks))
    assert trace.append("a").ts == 1.5
    assert trace.append("b").ts == 2.5


def test_jsonl_round_trip_and_stability():
    def build():
        trace = RunTrace()
        trace.append(NODE_ENTER, NodePath(), height=1, degree_budget=3)
        trace.append(MODEL_CALL, NodePath(), phase="plan", input_tokens=3, output_tokens=1)
        trace.append(NODE_ENTER, NodePath((0,)), height=2, degree_budget=2)
        return trace

    one, two = build(), build()
    assert one.to_jsonl() == two.to_jsonl()
    parsed = RunTrace.from_jsonl(one.to_jsonl())
    assert parsed.to_jsonl() == one.to_jsonl()


def test_splice_preserves_order():
    outer = RunTrace()
    outer.append("x", NodePath())
    buffer = RunTrace()
    buffer.append("y", NodePath((0,)), n=1)
    buffer.append("z", NodePath((0,)), n=2)
    outer.splice(buffer)
    kinds = [e.kind for e in outer]
    assert kinds == ["x", "y", "z"]
    assert [e.seq for e in outer] == [0, 1, 2]


def test_execution_counts():
    trace = RunTrace()
    for key in ("root", "0", "0", "1"):
        trace.append(NODE_ENTER, key, height=1)
    counts = trace.execution_counts()
    assert counts["0"] == 2 and counts["root"] == 1 and counts["1"] == 1


def test_totals_recompute_from_calls():
    trace = RunTrace()
    trace.append(MODEL_CALL, "root", phase="plan", input_tokens=10, output_tokens=4)
    trace.append(MODEL_CALL, "0", phase="implement", input_tokens=7, output_tokens=9)
    trace.append("embed_call", "root", calls=2, purpose="update")
    totals = trace.totals()
    assert (totals.input_tokens, totals.output_tokens) == (17, 13)
    assert totals.completion_calls == 2
    assert totals.embedding_calls == 2


def _good_trace():
    trace = RunTrace()
    trace.append(NODE_ENTER, "root", height=1, degree_budget=3)
    trace.append(DELEGATE, "root", count=2)
    trace.append(NODE_ENTER, "0", height=2, degree_budget=2)
    trace.append(NODE_ENTER, "1", height=2, degree_budget=2)
    return trace


def test_validate_tree_shape_accepts_good_trace():
    assert validate_tree_shape(_good_trace(), TreeConfig()) == []


def test_validate_tree_shape_flags_height_violation():
    trace = _good_trace()
    trace.append(NODE_ENTER, "0.0.0.0", height=4, degree_budget=0)
    violations = validate_tree_shape(trace, TreeConfig())
    assert any("height" in v for v in violations)


def test_validate_tree_shape_flags_degree_violation():
    trace = _good_trace()
    trace.append(DELEGATE, "0", count=5)
    violations = validate_tree_shape(trace, TreeConfig())
    assert any("budget" in v for v in violations)


def test_validate_tree_shape_flags_orphans():
    trace = RunTrace()
    trace.append(NODE_ENTER, "0.1", height=3, degree_budget=0)
    violations = validate_tree_shape(trace, TreeConfig())
    assert any("without its parent" in v for v in violations)

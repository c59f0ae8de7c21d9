"""Acceptance suite: one test per exit criterion, each printing a
pass/fail line. Tolerances are exact unless stated otherwise; the live
smoke test is skipped (not failed) when no endpoint is configured.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion
lines.
"""

import json
import math
import os
import random
import time
from collections import Counter

import pytest

from treecoder import (
    HashedBagOfTokensEmbedder,
    MemoryConfig,
    MemoryRecord,
    MemoryStore,
    NodePath,
    Orchestrator,
    Sandbox,
    SandboxLimits,
    ScriptEntry,
    TreeConfig,
    Verdict,
    Verifier,
    run_suite,
    sweep,
    validate_tree_shape,
)
from treecoder import trace as tracing
from treecoder.harness import report_tokens

from helpers import (
    FakeSandbox,
    PASS_SUITE,
    bullet_list,
    implement_text,
    make_services,
    plan_text,
    random_want_fn,
    tree_script,
)
from test_harness import maximal_suite_and_entries
from test_verify import StubCaller, suite as failing_suite_of


def _report(criterion: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[acceptance] criterion {criterion}: {status}{suffix}")
    assert ok, f"criterion {criterion} failed{suffix}"


def test_criterion_1_tree_shape_suite():
    """200 randomized scripted runs over the full config grid stay within
    every structural bound; must finish in under 30 seconds."""
    start = time.monotonic()
    runs = 0
    violations = []
    seed = 0
    grid = [(m, n, k) for m in range(1, 6) for n in range(1, 6) for k in (1, 2)]
    while runs < 200:
        m, n, k = grid[runs % len(grid)]
        seed += 1
        config = TreeConfig(max_height=m, initial_degree=n, degree_decay=k)
        entries, _ = tree_script(config, want_fn=random_want_fn(seed))
        services = make_services(entries)
        _, trace = Orchestrator(config, services).run("grid task")
        violations += validate_tree_shape(trace, config)
        # Leaves at the height bound: no node ever exceeds it.
        heights = [e.data["height"] for e in trace.events(tracing.NODE_ENTER)]
        if heights and max(heights) > m:
            violations.append(f"height overflow at m={m}")
        runs += 1
    elapsed = time.monotonic() - start
    _report("1", not violations and elapsed < 30.0, f"{runs} runs, {elapsed:.1f}s, {len(violations)} violations")


def test_criterion_2_debug_loop_semantics():
    """Scripted fail/fix sequences reproduce the exact loop counts."""
    caller = StubCaller({"fix_errors": "```\nrepair\n```"})

    verifier = Verifier(FakeSandbox([Verdict.FAIL, Verdict.FAIL, Verdict.PASS]))
    a, _ = verifier.verify("c", failing_suite_of(), retries=3, caller=caller)
    fail_fail_pass = (a.tests_run, a.fix_iterations, a.verified) == (3, 2, True)

    verifier = Verifier(FakeSandbox([Verdict.FAIL] * 8))
    b, _ = verifier.verify("c", failing_suite_of(), retries=3, caller=caller)
    always_fail = (b.tests_run, b.fix_iterations, b.verified) == (4, 3, False)

    in_range = True
    rng = random.Random(2)
    for _ in range(50):
        retries = rng.randint(0, 4)
        verdicts = [rng.choice([Verdict.FAIL, Verdict.PASS]) for _ in range(retries + 2)]
        verifier = Verifier(FakeSandbox(verdicts))
        artifact, _ = verifier.verify("c", failing_suite_of(), retries=retries, caller=caller)
        in_range &= 1 <= artifact.tests_run <= retries + 1
    _report("2", fail_fail_pass and always_fail and in_range)


def test_criterion_3_locality_of_correction():
    """One flawed decomposition at a height-2 node of a 13-node tree: the
    multiset of executed paths outside that subtree matches the fault-free
    run exactly."""
    config = TreeConfig(max_height=3, initial_degree=4, degree_decay=2)
    clean_entries, expected = tree_script(config)
    assert len(expected) == 13
    _, clean = Orchestrator(config, make_services(clean_entries)).run("t")

    flawed = "1"
    entries = [e for e in clean_entries if not (e.path == flawed and e.phase == "review")]
    entries += [
        ScriptEntry(flawed, "review", "VERDICT: REVISE\n" + bullet_list(["alt a", "alt b"]), round=0),
        ScriptEntry(flawed, "review", "VERDICT: ACCEPT", round=1),
    ]
    _, faulty = Orchestrator(config, make_services(entries)).run("t")

    subtree_root = NodePath.from_key(flawed)
    clean_counts = clean.execution_counts()
    faulty_counts = faulty.execution_counts()
    outside_clean = Counter(
        {p: c for p, c in clean_counts.items() if not NodePath.from_key(p).is_within(subtree_root)}
    )
    outside_faulty = Counter(
        {p: c for p, c in faulty_counts.items() if not NodePath.from_key(p).is_within(subtree_root)}
    )
    exact = outside_faulty == outside_clean and all(c == 1 for c in outside_faulty.values())
    revised_twice = faulty_counts["1.0"] == 2 and faulty_counts["1.1"] == 2
    _report("3", exact and revised_twice, f"outside nodes={len(outside_faulty)}")


def test_criterion_4_clarification_ordering():
    """A clarifying leaf yields exactly one exchange, sequenced before the
    node's decompose/implement events."""
    config = TreeConfig(max_height=2, initial_degree=2)
    entries = [
        ScriptEntry("root", "plan", plan_text("root")),
        ScriptEntry("root", "decompose", bullet_list(["left", "right"])),
        ScriptEntry("root", "review", "VERDICT: ACCEPT"),
        ScriptEntry("root", "implement", implement_text("root")),
        ScriptEntry("root", "generate_tests", PASS_SUITE),
        ScriptEntry("root", "clarify_answer", "integers only"),
        ScriptEntry("0", "plan", "1. hazy\nVERDICT: CLARIFY: format?", round=0),
        ScriptEntry("0", "plan", plan_text("0"), round=1),
        ScriptEntry("0", "implement", implement_text("0")),
        ScriptEntry("0", "generate_tests", PASS_SUITE),
        ScriptEntry("1", "plan", plan_text("1")),
        ScriptEntry("1", "implement", implement_text("1")),
        ScriptEntry("1", "generate_tests", PASS_SUITE),
    ]
    _, trace = Orchestrator(config, make_services(entries)).run("t")
    clarifications = trace.events(tracing.CLARIFICATION)
    exactly_one = len(clarifications) == 1 and clarifications[0].path == "0"
    node_calls = [
        e
        for e in trace.events(tracing.MODEL_CALL, path="0")
        if e.data["phase"] in ("decompose", "implement")
    ]
    ordered = bool(node_calls) and all(clarifications[0].seq < e.seq for e in node_calls)
    _report("4", exactly_one and ordered)


def test_criterion_5_memory_laws():
    start = time.monotonic()
    embedder = HashedBagOfTokensEmbedder()

    # (a) duplicate description merges without growth
    store = MemoryStore(embedder, MemoryConfig())
    store.update(MemoryRecord(description="sort a list", depth=1))
    merged = store.update(MemoryRecord(description="sort a list", depth=1))
    law_a = merged.merged and store.size == 1

    # (b) cosine-0.4 pair inserts (verified by the bag-of-tokens oracle)
    a_text = "alpha beta gamma delta epsilon"
    b_text = "alpha beta zeta eta theta"
    cosine = embedder.embed(a_text).cosine(embedder.embed(b_text))
    store.reset()
    store.update(MemoryRecord(description=a_text, depth=1))
    second = store.update(MemoryRecord(description=b_text, depth=1))
    law_b = math.isclose(cosine, 0.4, abs_tol=1e-9) and second.inserted and store.size == 2

    # (c) retrieval equals brute force with depth window and limit 3 on a
    # 1,000-record store: recall@3 = 1.0
    store = MemoryStore(embedder, MemoryConfig())
    rng = random.Random(31)
    words = ["sort", "merge", "parse", "scan", "tree", "graph", "heap", "trie",
             "queue", "regex", "token", "float", "prime", "hash", "byte", "node"]
    while store.size < 1000:
        text = " ".join(rng.choices(words, k=rng.randint(2, 5))) + f" u{store.size}-{rng.randint(0, 9999)}"
        store.update(MemoryRecord(description=text, depth=rng.randint(1, 5)))
    law_c = True
    for _ in range(10):
        query = " ".join(rng.choices(words, k=3))
        depth = rng.randint(1, 5)
        got = [r.record_id for r in store.retrieve(query, depth)]
        query_vec = embedder.embed(query).values
        scored = []
        for rec in store.records():
            if abs(rec.depth - depth) > 1:
                continue
            sim = sum(x * y for x, y in zip(query_vec, rec.embedding.values))
            scored.append((rec, sim))
        scored.sort(key=lambda p: (-p[1], -p[0].created_at, p[0].record_id))
        expected = [rec.record_id for rec, _ in scored[:3]]
        law_c &= got == expected

    # (d) reset empties the store
    store.reset()
    law_d = store.size == 0 and store.retrieve("sort", 1) == []

    elapsed = time.monotonic() - start
    _report(
        "5",
        law_a and law_b and law_c and law_d and elapsed < 10.0,
        f"cosine={cosine:.3f}, {elapsed:.1f}s",
    )


def test_criterion_6_token_accounting():
    """Report totals equal per-call sums exactly; memory-on adds zero
    completion calls under the newest-wins merge strategy."""
    config = TreeConfig(max_height=2, initial_degree=2)
    suite, entries = maximal_suite_and_entries(config, ("s1", "s2"))
    sandbox = Sandbox(SandboxLimits(timeout_seconds=5.0))

    traces = []
    baseline = run_suite(
        suite, config, make_services(entries), sandbox, seed=2,
        trace_sink=lambda *args: traces.append(args[2]),
    )
    per_call = Counter()
    for trace in traces:
        totals = trace.totals()
        per_call["input"] += totals.input_tokens
        per_call["output"] += totals.output_tokens
        per_call["calls"] += totals.completion_calls
    exact = (
        baseline[0].totals.input_tokens == per_call["input"]
        and baseline[0].totals.output_tokens == per_call["output"]
        and baseline[0].totals.completion_calls == per_call["calls"]
    )

    store = MemoryStore(HashedBagOfTokensEmbedder(), MemoryConfig())  # newest-wins default
    with_memory = run_suite(suite, config, make_services(entries, memory=store), sandbox, seed=2)
    delta = report_tokens(with_memory, baseline).deltas[0]
    _report("6", exact and delta.completion_calls_delta == 0,
            f"calls delta={delta.completion_calls_delta}")


def test_criterion_7_determinism():
    """Two full suite runs with identical seed, config, and script produce
    byte-identical reports and traces."""
    config = TreeConfig()
    suite, entries = maximal_suite_and_entries(config, ("s1", "s2", "s3"))
    sandbox = Sandbox(SandboxLimits(timeout_seconds=5.0))

    def run_once():
        traces = {}
        reports = run_suite(
            suite, config, make_services(entries), sandbox, rounds=2, seed=11,
            trace_sink=lambda tid, rnd, tr: traces.__setitem__((tid, rnd), tr.to_jsonl()),
        )
        return "".join(r.to_json() for r in reports), traces

    report_a, traces_a = run_once()
    report_b, traces_b = run_once()
    _report("7", report_a == report_b and traces_a == traces_b,
            f"{len(traces_a)} traces compared")


def test_criterion_8_sandbox_contract():
    limits = SandboxLimits(timeout_seconds=1.0, grace_seconds=2.0, stream_cap_bytes=65_536)
    sandbox = Sandbox(limits)

    timeout_result = sandbox.run("while True:\n    pass\n", "assert True\n")
    timeout_ok = (
        timeout_result.verdict is Verdict.TIMEOUT
        and limits.timeout_seconds <= timeout_result.wall_time <= limits.timeout_seconds + limits.grace_seconds
    )

    spam = sandbox.run("import sys\nsys.stdout.write('y' * 1_000_000)\n", "assert True\n")
    truncation_ok = (
        len(spam.stdout.encode("utf-8")) <= limits.stream_cap_bytes
        and spam.verdict is Verdict.PASS
    )

    # 100 verify calls, then confirm nothing outlived them.
    quick = Sandbox(SandboxLimits(timeout_seconds=5.0))
    verifier = Verifier(quick)
    caller = StubCaller()
    for i in range(100):
        artifact, _ = verifier.verify(
            f"def f():\n    return {i}\n", failing_suite_of("assert True\n"), retries=0, caller=caller
        )
        assert artifact.verified
    psutil = pytest.importorskip("psutil")
    time.sleep(0.2)
    leftovers = psutil.Process().children(recursive=True)
    no_orphans = leftovers == []
    _report("8", timeout_ok and truncation_ok and no_orphans,
            f"orphans={len(leftovers)}")


LIVE_ENDPOINT_VAR = "TREECODER_SMOKE_ENDPOINT"
LIVE_MODEL_VAR = "TREECODER_SMOKE_MODEL"


@pytest.mark.skipif(
    not os.environ.get(LIVE_ENDPOINT_VAR),
    reason=f"live smoke skipped: {LIVE_ENDPOINT_VAR} not configured",
)
def test_criterion_9_live_smoke(tmp_path):
    """Optional, network-gated: a 5-task toy suite completes with exit code
    0 and at least one task passes its hidden tests."""
    from treecoder.cli import main

    suite_path = tmp_path / "toy.jsonl"
    rows = [
        {"task_id": f"toy-{i}", "prompt": prompt, "entry_point": entry, "hidden_tests": tests}
        for i, (prompt, entry, tests) in enumerate(
            [
                ("Write a function add(a, b) returning a + b.", "add", "assert add(1, 2) == 3\n"),
                ("Write a function double(x) returning 2 * x.", "double", "assert double(4) == 8\n"),
                ("Write a function is_even(n) returning True when n is even.", "is_even", "assert is_even(2)\nassert not is_even(3)\n"),
                ("Write a function head(xs) returning the first element.", "head", "assert head([9, 1]) == 9\n"),
                ("Write a function shout(s) returning s upper-cased.", "shout", "assert shout('hi') == 'HI'\n"),
            ]
        )
    ]
    suite_path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    report_path = tmp_path / "report.jsonl"
    code = main(
        [
            "bench",
            "--suite", str(suite_path),
            "--provider", "live",
            "--endpoint", os.environ[LIVE_ENDPOINT_VAR],
            "--model", os.environ.get(LIVE_MODEL_VAR, "gpt-4o-mini"),
            "--report-out", str(report_path),
            "--memory", "off",
        ]
    )
    report = json.loads(report_path.read_text(encoding="utf-8").splitlines()[0])
    passed = sum(1 for row in report["per_task"] if row["passed"])
    _report("9", code == 0 and passed >= 1, f"exit={code}, passed={passed}/5")


def test_criterion_10_sweep_shape():
    """Sweeping the height bound over {1,2,3} yields one row per value,
    single-node trees at height 1, and call counts matching the closed-form
    node bound."""
    from test_harness import closed_form_tree

    deepest = TreeConfig(max_height=3, initial_degree=3, degree_decay=1)
    suite, entries = maximal_suite_and_entries(deepest, ("s1", "s2"))
    sandbox = Sandbox(SandboxLimits(timeout_seconds=5.0))
    table = sweep("max_height", [1, 2, 3], suite, deepest, make_services(entries), sandbox, seed=0)

    three_rows = [row.value for row in table.rows] == [1, 2, 3]
    single_node_at_one = table.rows[0].node_count == len(suite)
    closed_form_ok = True
    for row in table.rows:
        nodes, calls = closed_form_tree(
            TreeConfig(max_height=row.value, initial_degree=3, degree_decay=1)
        )
        closed_form_ok &= row.node_count == nodes * len(suite)
        closed_form_ok &= row.totals.completion_calls == calls * len(suite)
    _report("10", three_rows and single_node_at_one and closed_form_ok,
            f"nodes per row={[r.node_count for r in table.rows]}")

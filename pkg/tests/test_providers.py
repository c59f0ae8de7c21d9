"""Provider tests: scripted table semantics, the hashed test embedder
against an independent oracle, and the live client over a stubbed session."""

import math
import random
import zlib
from collections import Counter

import pytest

from treecoder import (
    CallKey,
    CompletionRequest,
    CompletionResponse,
    EmbeddingVector,
    HashedBagOfTokensEmbedder,
    LiveProvider,
    LiveProviderConfig,
    NodePath,
    ScriptedProvider,
    ScriptEntry,
)
from treecoder.errors import ConfigError, MissingScriptEntry, ProviderError, TransportError
from treecoder.providers.live import TokenBucket


def _key(path="root", phase="plan", round=0, task=""):
    return CallKey(path=NodePath.from_key(path), phase=phase, round=round, task_id=task)


def _request(text="hello"):
    return CompletionRequest.from_prompt(text)


# Scripted provider


def test_scripted_lookup_is_identity_on_its_table():
    provider = ScriptedProvider(
        [ScriptEntry("root", "plan", "the exact plan", input_tokens=12, output_tokens=7)]
    )
    response = provider.complete(_request(), _key())
    assert response == CompletionResponse("the exact plan", 12, 7)


def test_scripted_unknown_key_is_a_defined_failure():
    provider = ScriptedProvider([ScriptEntry("root", "plan", "x")])
    with pytest.raises(MissingScriptEntry):
        provider.complete(_request(), _key(phase="implement"))


def test_scripted_duplicate_entries_rejected():
    entries = [ScriptEntry("root", "plan", "a", round=0), ScriptEntry("root", "plan", "b", round=0)]
    with pytest.raises(ProviderError):
        ScriptedProvider(entries)


def test_scripted_round_specific_beats_wildcard():
    provider = ScriptedProvider(
        [
            ScriptEntry("root", "fix_errors", "generic fix"),
            ScriptEntry("root", "fix_errors", "round two fix", round=1),
        ]
    )
    assert provider.complete(_request(), _key(phase="fix_errors", round=0)).content == "generic fix"
    assert provider.complete(_request(), _key(phase="fix_errors", round=1)).content == "round two fix"
    assert provider.complete(_request(), _key(phase="fix_errors", round=5)).content == "generic fix"


def test_scripted_task_scope_beats_shared_entry():
    provider = ScriptedProvider(
        [
            ScriptEntry("root", "plan", "shared"),
            ScriptEntry("root", "plan", "only for t1", task="t1"),
        ]
    )
    assert provider.complete(_request(), _key(task="t1")).content == "only for t1"
    assert provider.complete(_request(), _key(task="t2")).content == "shared"


def test_scripted_word_count_token_defaults():
    provider = ScriptedProvider([ScriptEntry("root", "plan", "three word reply")])
    response = provider.complete(_request("a five word prompt here"), _key())
    assert response.input_tokens == 5
    assert response.output_tokens == 3


def test_scripted_from_file_round_trip(tmp_path):
    script = tmp_path / "script.yaml"
    script.write_text(
        """
entries:
  - path: root
    phase: plan
    round: 0
    content: |
      1. do it
      VERDICT: PROCEED
    input_tokens: 9
    output_tokens: 4
  - path: "0"
    phase: implement
    round: "*"
    content: "code"
""",
        encoding="utf-8",
    )
    provider = ScriptedProvider.from_file(script)
    assert len(provider) == 2
    response = provider.complete(_request(), _key())
    assert response.input_tokens == 9
    assert "VERDICT: PROCEED" in response.content
    assert provider.complete(_request(), _key("0", "implement", round=3)).content == "code"


def test_scripted_from_file_rejects_bad_shape(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("just a string", encoding="utf-8")
    with pytest.raises(ProviderError):
        ScriptedProvider.from_file(bad)


# Hashed bag-of-tokens embedder, checked against an independent oracle.


def oracle_vector(text: str, dimension: int = 256) -> list[float]:
    tokens = []
    current = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    if not tokens:
        tokens = [text]
    counts = Counter(zlib.crc32(t.encode()) % dimension for t in tokens)
    raw = [float(counts.get(i, 0)) for i in range(dimension)]
    norm = math.sqrt(sum(v * v for v in raw))
    return [v / norm for v in raw]


def oracle_cosine(a: str, b: str) -> float:
    return sum(x * y for x, y in zip(oracle_vector(a), oracle_vector(b)))


def test_embed_is_deterministic():
    embedder = HashedBagOfTokensEmbedder()
    assert embedder.embed("sort a list") == embedder.embed("sort a list")


def test_embed_self_similarity_is_one():
    embedder = HashedBagOfTokensEmbedder()
    v = embedder.embed("sort a list")
    assert v.cosine(v) == pytest.approx(1.0, abs=1e-12)


def test_embed_similarity_ordering_matches_oracle():
    embedder = HashedBagOfTokensEmbedder()
    anchor = "sort a list ascending"
    near = "sort a list descending"
    far = "parse an ip packet header"
    oracle_near = oracle_cosine(anchor, near)
    oracle_far = oracle_cosine(anchor, far)
    assert oracle_far < oracle_near
    got_near = embedder.embed(anchor).cosine(embedder.embed(near))
    got_far = embedder.embed(anchor).cosine(embedder.embed(far))
    assert got_near == pytest.approx(oracle_near, abs=1e-12)
    assert got_far == pytest.approx(oracle_far, abs=1e-12)
    assert got_far < got_near


def test_embed_norm_is_one_for_random_texts():
    rng = random.Random(7)
    words = ["alpha", "beta", "gamma", "delta", "pivot", "merge", "sort", "列表", "42"]
    embedder = HashedBagOfTokensEmbedder()
    for _ in range(50):
        text = " ".join(rng.choices(words, k=rng.randint(1, 12)))
        values = embedder.embed(text).values
        norm = math.sqrt(sum(v * v for v in values))
        assert abs(norm - 1.0) <= 1e-9


def test_embed_rejects_empty_text():
    with pytest.raises(ValueError):
        HashedBagOfTokensEmbedder().embed("")


def test_embed_handles_non_alphanumeric_text():
    v = HashedBagOfTokensEmbedder().embed("!!! ???")
    norm = math.sqrt(sum(x * x for x in v.values))
    assert abs(norm - 1.0) <= 1e-9


def test_embedding_vector_validates_norm():
    with pytest.raises(ValueError):
        EmbeddingVector((0.5, 0.5))
    with pytest.raises(ValueError):
        EmbeddingVector(())


def test_embedding_vector_dimension_mismatch():
    a = EmbeddingVector.normalized([1.0, 0.0])
    b = EmbeddingVector.normalized([1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        a.cosine(b)


# Token bucket


def test_token_bucket_burst_then_refill():
    clock = {"t": 0.0}
    sleeps = []

    def fake_clock():
        return clock["t"]

    def fake_sleep(seconds):
        sleeps.append(seconds)
        clock["t"] += seconds

    bucket = TokenBucket(rate_per_second=2.0, burst=2, clock=fake_clock, sleep=fake_sleep)
    bucket.take()
    bucket.take()
    assert sleeps == []  # burst capacity
    bucket.take()  # must wait half a second at 2/s
    assert sleeps and sleeps[0] == pytest.approx(0.5)


def test_token_bucket_rejects_bad_params():
    with pytest.raises(ValueError):
        TokenBucket(0.0, 1)


# Live provider over a stubbed HTTP session


class _StubResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload or {}

    def raise_for_status(self):
        if self.status_code >= 400:
            import requests

            raise requests.HTTPError(f"status {self.status_code}")

    def json(self):
        return self._payload


class _StubSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers})
        return self.responses.pop(0)


def _live_config(**kwargs):
    defaults = dict(endpoint="https://api.test/v1", model="m1", api_key_env="TEST_KEY", max_retries=1)
    defaults.update(kwargs)
    return LiveProviderConfig(**defaults)


def _chat_payload(content="hi", prompt_tokens=11, completion_tokens=3):
    return {
        "choices": [{"message": {"content": content}}],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
    }


def test_live_provider_happy_path(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "secret")
    session = _StubSession([_StubResponse(payload=_chat_payload())])
    provider = LiveProvider(_live_config(), session=session)
    response = provider.complete(_request("ping"), _key())
    assert response.content == "hi"
    assert response.input_tokens == 11 and response.output_tokens == 3
    call = session.calls[0]
    assert call["url"].endswith("/chat/completions")
    assert call["json"]["temperature"] == 0.0
    assert call["headers"]["Authorization"] == "Bearer secret"


def test_live_provider_retries_transient_failures(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "secret")
    monkeypatch.setattr("time.sleep", lambda s: None)
    session = _StubSession([_StubResponse(status_code=500), _StubResponse(payload=_chat_payload())])
    provider = LiveProvider(_live_config(), session=session)
    assert provider.complete(_request(), _key()).content == "hi"
    assert len(session.calls) == 2


def test_live_provider_fails_after_retries(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "secret")
    monkeypatch.setattr("time.sleep", lambda s: None)
    session = _StubSession([_StubResponse(status_code=500)] * 2)
    provider = LiveProvider(_live_config(), session=session)
    with pytest.raises(TransportError):
        provider.complete(_request(), _key())


def test_live_provider_requires_api_key(monkeypatch):
    monkeypatch.delenv("TEST_KEY", raising=False)
    provider = LiveProvider(_live_config(), session=_StubSession([]))
    with pytest.raises(ConfigError):
        provider.complete(_request(), _key())

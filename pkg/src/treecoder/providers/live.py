"""Live HTTP backend speaking the OpenAI-compatible chat-completions wire
shape. Endpoint, model, and key come from configuration; the engine never
hardcodes a vendor."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass

import requests

from ..errors import ConfigError, TransportError
from .base import CallKey, CompletionRequest, CompletionResponse, EmbeddingVector


@dataclass(frozen=True)
class LiveProviderConfig:
    endpoint: str  # base URL, e.g. https://api.example.com/v1
    model: str
    api_key_env: str = "TREECODER_API_KEY"
    timeout_seconds: float = 60.0
    max_retries: int = 2
    embedding_model: str = ""
    # Token bucket: requests per second with a small burst. None disables.
    rate_limit_per_second: float | None = None
    rate_limit_burst: int = 4

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise ConfigError(f"API key env var {self.api_key_env} is not set")
        return key


class TokenBucket:
    """Thread-safe token bucket; blocks until a token is available."""

    def __init__(self, rate_per_second: float, burst: int, clock=time.monotonic, sleep=time.sleep):
        if rate_per_second <= 0 or burst < 1:
            raise ValueError("rate must be > 0 and burst >= 1")
        self._rate = rate_per_second
        self._capacity = float(burst)
        self._tokens = float(burst)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def take(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._capacity, self._tokens + (now - self._last) * self._rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


class LiveProvider:
    def __init__(self, config: LiveProviderConfig, session: requests.Session | None = None):
        self._config = config
        self._session = session or requests.Session()
        self._bucket = None
        if config.rate_limit_per_second:
            self._bucket = TokenBucket(config.rate_limit_per_second, config.rate_limit_burst)

    def _post(self, path: str, payload: dict) -> dict:
        url = self._config.endpoint.rstrip("/") + path
        headers = {"Authorization": f"Bearer {self._config.api_key()}"}
        last_error: Exception | None = None
        for attempt in range(self._config.max_retries + 1):
            if self._bucket is not None:
                self._bucket.take()
            try:
                resp = self._session.post(
                    url, json=payload, headers=headers, timeout=self._config.timeout_seconds
                )
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise TransportError(f"{url} returned {resp.status_code}")
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, TransportError, ValueError) as exc:
                last_error = exc
                if attempt < self._config.max_retries:
                    time.sleep(min(2.0**attempt, 8.0))
        raise TransportError(f"live backend failed after retries: {last_error}")

    def complete(self, request: CompletionRequest, key: CallKey) -> CompletionResponse:
        payload = {
            "model": self._config.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
        }
        data = self._post("/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise TransportError(f"malformed completion payload for {key}") from None
        usage = data.get("usage") or {}
        return CompletionResponse(
            content=content,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )


class LiveEmbedder:
    """Embeddings endpoint client; output is re-normalized locally so the
    unit-norm contract holds regardless of the backend."""

    def __init__(self, config: LiveProviderConfig, dimension: int, session=None):
        if not config.embedding_model:
            raise ConfigError("embedding_model must be set for the live embedder")
        self._provider = LiveProvider(config, session=session)
        self._config = config
        self._dimension = dimension

    @property
    def identity(self) -> str:
        return f"live:{self._config.embedding_model}:{self._dimension}"

    @property
    def dimension(self) -> int:
        return self._dimension

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        data = self._provider._post(
            "/embeddings", {"model": self._config.embedding_model, "input": text}
        )
        try:
            raw = data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError):
            raise TransportError("malformed embedding payload") from None
        if len(raw) != self._dimension:
            raise ConfigError(
                f"embedding dimension {len(raw)} != configured {self._dimension}"
            )
        return EmbeddingVector.normalized([float(v) for v in raw])

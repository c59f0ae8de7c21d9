"""Deterministic test embedder: hashed bag of tokens.

Order-insensitive, cheap, and monotone in token overlap, which is all the
memory-store tests need. Uses crc32 so vectors are stable across processes
(the builtin ``hash`` is salted per interpreter run).
"""

from __future__ import annotations

import re
import zlib

from .base import EmbeddingVector

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class HashedBagOfTokensEmbedder:
    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self._dimension = dimension

    @property
    def identity(self) -> str:
        return f"hashed-bow-{self._dimension}"

    @property
    def dimension(self) -> int:
        return self._dimension

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        tokens = [t for t in _TOKEN_SPLIT.split(text.lower()) if t]
        if not tokens:
            # No alphanumeric content at all: bucket the raw text so the
            # output still has unit norm.
            tokens = [text]
        counts = [0.0] * self._dimension
        for token in tokens:
            counts[zlib.crc32(token.encode("utf-8")) % self._dimension] += 1.0
        return EmbeddingVector.normalized(counts)

from .base import (
    CallKey,
    CompletionProvider,
    CompletionRequest,
    CompletionResponse,
    EmbeddingProvider,
    EmbeddingVector,
    Message,
    ResponseKind,
)
from .embeddings import HashedBagOfTokensEmbedder
from .live import LiveEmbedder, LiveProvider, LiveProviderConfig, TokenBucket
from .scripted import ScriptEntry, ScriptedProvider

__all__ = [
    "CallKey",
    "CompletionProvider",
    "CompletionRequest",
    "CompletionResponse",
    "EmbeddingProvider",
    "EmbeddingVector",
    "HashedBagOfTokensEmbedder",
    "LiveEmbedder",
    "LiveProvider",
    "LiveProviderConfig",
    "Message",
    "ResponseKind",
    "ScriptEntry",
    "ScriptedProvider",
    "TokenBucket",
]

"""Long-term memory: a vector store of validated experiences.

Retrieval embeds the query, filters candidates to a tree-depth window, and
ranks by cosine similarity. Updates either insert or consolidate into the
single best match when similarity reaches the threshold, so near-duplicates
never pile up. The default index is an exact scan: at desk scale (a few
thousand records) exact search is fast and strictly reproducible; the index
is a narrow interface so an approximate structure can be swapped in, as
long as it passes the exactness suite.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .errors import MemoryStoreError
from .providers.base import EmbeddingProvider, EmbeddingVector

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT_VERSION = 1


class MergeStrategy(str, Enum):
    CONSOLIDATE = "consolidate"
    NEWEST_WINS = "newest_wins"


@dataclass(frozen=True)
class MemoryConfig:
    similarity_threshold: float = 0.75
    retrieval_limit: int = 3
    depth_window: int = 1
    merge_strategy: MergeStrategy = MergeStrategy.NEWEST_WINS

    def __post_init__(self):
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise MemoryStoreError("similarity_threshold must be in [0, 1]")
        if self.retrieval_limit < 1:
            raise MemoryStoreError("retrieval_limit must be >= 1")
        if self.depth_window < 0:
            raise MemoryStoreError("depth_window must be >= 0")


@dataclass(frozen=True)
class MemoryRecord:
    """One stored experience. ``record_id``, ``embedding`` and
    ``created_at`` are assigned by the store on insert; candidates may
    leave them at their defaults."""

    description: str
    reasoning_trace: str = ""
    code: str = ""
    depth: int = 1
    record_id: str = ""
    embedding: EmbeddingVector | None = None
    created_at: int = -1
    merge_count: int = 0


class UpdateKind(str, Enum):
    INSERTED = "inserted"
    MERGED = "merged"


@dataclass(frozen=True)
class UpdateOutcome:
    kind: UpdateKind
    record_id: str
    embed_calls: int

    @property
    def inserted(self) -> bool:
        return self.kind is UpdateKind.INSERTED

    @property
    def merged(self) -> bool:
        return self.kind is UpdateKind.MERGED


@dataclass(frozen=True)
class StoreStats:
    size: int
    total_merges: int
    depth_histogram: dict[int, int]


class VectorIndex(Protocol):
    def add(self, record_id: str, vector: EmbeddingVector) -> None: ...
    def remove(self, record_id: str) -> None: ...
    def clear(self) -> None: ...
    def similarities(self, query: EmbeddingVector, ids: list[str]) -> list[float]: ...


class ExactIndex:
    """Exact cosine scan over L2-normalized vectors (dot products)."""

    def __init__(self):
        self._vectors: dict[str, np.ndarray] = {}

    def add(self, record_id: str, vector: EmbeddingVector) -> None:
        self._vectors[record_id] = np.asarray(vector.values, dtype=np.float64)

    def remove(self, record_id: str) -> None:
        self._vectors.pop(record_id, None)

    def clear(self) -> None:
        self._vectors.clear()

    def similarities(self, query: EmbeddingVector, ids: list[str]) -> list[float]:
        if not ids:
            return []
        matrix = np.stack([self._vectors[i] for i in ids])
        q = np.asarray(query.values, dtype=np.float64)
        return (matrix @ q).tolist()


# Consolidation hook: given (existing, incoming) returns the unified
# (description, reasoning_trace). Wired to a model call by the engine.
Consolidator = Callable[[MemoryRecord, MemoryRecord], tuple[str, str]]


class MemoryStore:
    def __init__(
        self,
        embedder: EmbeddingProvider,
        config: MemoryConfig | None = None,
        index: VectorIndex | None = None,
    ):
        self._embedder = embedder
        self.config = config or MemoryConfig()
        self._index: VectorIndex = index if index is not None else ExactIndex()
        self._records: dict[str, MemoryRecord] = {}
        self._seq = 0
        self._total_merges = 0
        # Single-writer contract: updates/reset serialize here; reads don't.
        self._write_lock = threading.RLock()

    @property
    def size(self) -> int:
        return len(self._records)

    @property
    def embedder(self) -> EmbeddingProvider:
        return self._embedder

    def records(self) -> list[MemoryRecord]:
        return sorted(self._records.values(), key=lambda r: r.created_at)

    def stats(self) -> StoreStats:
        histogram: dict[int, int] = {}
        for record in self._records.values():
            histogram[record.depth] = histogram.get(record.depth, 0) + 1
        return StoreStats(
            size=len(self._records),
            total_merges=self._total_merges,
            depth_histogram=histogram,
        )

    def retrieve(
        self,
        query_description: str,
        query_depth: int,
        config: MemoryConfig | None = None,
    ) -> list[MemoryRecord]:
        """Depth-filtered nearest neighbors, best first.

        Ranking: cosine descending, then newer record, then record id. The
        threshold only gates updates; retrieval returns the top k whatever
        their absolute similarity.
        """
        cfg = config or self.config
        # The query is always encoded (one embed call), even when nothing is
        # eligible, so callers can account for embedding work statically.
        query = self._embedder.embed(query_description)
        snapshot = list(self._records.values())
        eligible = [r for r in snapshot if abs(r.depth - query_depth) <= cfg.depth_window]
        if not eligible:
            return []
        ids = [r.record_id for r in eligible]
        sims = self._index.similarities(query, ids)
        ranked = sorted(
            zip(eligible, sims),
            key=lambda pair: (-pair[1], -pair[0].created_at, pair[0].record_id),
        )
        return [record for record, _ in ranked[: cfg.retrieval_limit]]

    def update(
        self,
        candidate: MemoryRecord,
        config: MemoryConfig | None = None,
        consolidator: Consolidator | None = None,
    ) -> UpdateOutcome:
        """Insert the candidate, or consolidate it into the single most
        similar existing record when similarity >= the threshold.

        Callers must only store verified solutions. Under NEWEST_WINS this
        makes no completion calls; embed_calls on the outcome reports the
        embedding work (1 for insert, 2 for merge since the merged
        description is re-encoded).
        """
        cfg = config or self.config
        if candidate.depth < 1:
            raise MemoryStoreError("record depth must be >= 1")
        if not candidate.description:
            raise MemoryStoreError("record description must be non-empty")
        if candidate.embedding is not None and candidate.embedding.dimension != self._embedder.dimension:
            raise MemoryStoreError(
                f"embedding dimension {candidate.embedding.dimension} != "
                f"store dimension {self._embedder.dimension}"
            )
        with self._write_lock:
            vector = self._embedder.embed(candidate.description)
            embed_calls = 1
            best_id, best_sim = self._best_match(vector)
            if best_id is not None and best_sim >= cfg.similarity_threshold:
                merged = self._consolidate(
                    self._records[best_id], candidate, cfg.merge_strategy, consolidator
                )
                merged_vector = self._embedder.embed(merged.description)
                embed_calls += 1
                merged = replace(merged, embedding=merged_vector)
                self._records[best_id] = merged
                self._index.add(best_id, merged_vector)
                self._total_merges += 1
                return UpdateOutcome(UpdateKind.MERGED, best_id, embed_calls)
            record_id = f"mem-{self._seq:06d}"
            stored = replace(
                candidate,
                record_id=record_id,
                embedding=vector,
                created_at=self._seq,
                merge_count=0,
            )
            self._seq += 1
            self._records[record_id] = stored
            self._index.add(record_id, vector)
            return UpdateOutcome(UpdateKind.INSERTED, record_id, embed_calls)

    def _best_match(self, vector: EmbeddingVector) -> tuple[str | None, float]:
        if not self._records:
            return None, 0.0
        ids = sorted(self._records)  # stable order for deterministic ties
        sims = self._index.similarities(vector, ids)
        best = max(range(len(ids)), key=lambda i: (sims[i], ids[i]))
        return ids[best], sims[best]

    def _consolidate(
        self,
        existing: MemoryRecord,
        incoming: MemoryRecord,
        strategy: MergeStrategy,
        consolidator: Consolidator | None,
    ) -> MemoryRecord:
        """Merge ``incoming`` into ``existing``, keeping the existing
        record's identity. The incoming code always wins (it is newer)."""
        if strategy is MergeStrategy.CONSOLIDATE and consolidator is not None:
            try:
                description, trace = consolidator(existing, incoming)
                if description.strip():
                    return replace(
                        existing,
                        description=description.strip(),
                        reasoning_trace=trace,
                        code=incoming.code,
                        depth=incoming.depth,
                        merge_count=existing.merge_count + 1,
                    )
            except Exception as exc:
                logger.warning("consolidation call failed, falling back to newest-wins: %s", exc)
        # Newest-wins: incoming fields, union of the two descriptions.
        if incoming.description == existing.description:
            description = existing.description
        else:
            description = f"{existing.description} | {incoming.description}"
        return replace(
            existing,
            description=description,
            reasoning_trace=incoming.reasoning_trace,
            code=incoming.code,
            depth=incoming.depth,
            merge_count=existing.merge_count + 1,
        )

    def reset(self) -> None:
        """Clear everything, including the id sequence, so per-round runs
        are reproducible from a cold store."""
        with self._write_lock:
            self._records.clear()
            self._index.clear()
            self._seq = 0
            self._total_merges = 0

    # Snapshot persistence: one versioned header line, then one record per
    # line, byte-stable for identical stores.

    def save(self, path: str | Path) -> None:
        with self._write_lock:
            header = {
                "format_version": SNAPSHOT_FORMAT_VERSION,
                "embedder_identity": self._embedder.identity,
                "dimension": self._embedder.dimension,
                "similarity_threshold": self.config.similarity_threshold,
                "seq": self._seq,
                "total_merges": self._total_merges,
            }
            lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
            for record in self.records():
                lines.append(
                    json.dumps(
                        {
                            "record_id": record.record_id,
                            "description": record.description,
                            "reasoning_trace": record.reasoning_trace,
                            "code": record.code,
                            "depth": record.depth,
                            "created_at": record.created_at,
                            "merge_count": record.merge_count,
                            "embedding": list(record.embedding.values),
                        },
                        sort_keys=True,
                        separators=(",", ":"),
                    )
                )
            Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(
        cls,
        path: str | Path,
        embedder: EmbeddingProvider,
        config: MemoryConfig | None = None,
        index: VectorIndex | None = None,
    ) -> MemoryStore:
        text = Path(path).read_text(encoding="utf-8")
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise MemoryStoreError(f"empty snapshot: {path}")
        header = json.loads(lines[0])
        if header.get("format_version") != SNAPSHOT_FORMAT_VERSION:
            raise MemoryStoreError(f"unsupported snapshot version: {header.get('format_version')}")
        if header.get("embedder_identity") != embedder.identity:
            raise MemoryStoreError(
                f"snapshot embedder {header.get('embedder_identity')!r} does not match "
                f"configured embedder {embedder.identity!r}"
            )
        store = cls(
            embedder,
            config or MemoryConfig(similarity_threshold=header["similarity_threshold"]),
            index=index,
        )
        for line in lines[1:]:
            obj = json.loads(line)
            vector = EmbeddingVector(tuple(obj["embedding"]))
            record = MemoryRecord(
                description=obj["description"],
                reasoning_trace=obj["reasoning_trace"],
                code=obj["code"],
                depth=obj["depth"],
                record_id=obj["record_id"],
                embedding=vector,
                created_at=obj["created_at"],
                merge_count=obj["merge_count"],
            )
            store._records[record.record_id] = record
            store._index.add(record.record_id, vector)
        store._seq = header.get("seq", len(store._records))
        store._total_merges = header.get("total_merges", 0)
        return store

"""Table-driven completion provider for deterministic offline runs.

Every response is looked up by (task, node path, phase, round). The table
is immutable after load, so a full run under this provider is
bit-reproducible, token totals included.

Script files are YAML::

    entries:
      - path: root          # node path key, "root" or "0.2"
        phase: plan
        round: 0            # optional; omit to match any round
        task: sum-two       # optional; scopes the entry to one suite task
        content: |
          1. add the numbers
          VERDICT: PROCEED
        input_tokens: 12    # optional; default is a word-count proxy
        output_tokens: 7

When token counts are omitted, a deterministic word-count proxy is used:
input tokens = words in the rendered prompt, output tokens = words in the
response. That keeps accounting sensitive to prompt growth (e.g. retrieved
memory context) without a real tokenizer.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import yaml

from ..errors import MissingScriptEntry, ProviderError
from .base import CallKey, CompletionRequest, CompletionResponse


def word_count(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class ScriptEntry:
    path: str
    phase: str
    content: str
    round: int | None = None  # None matches any round
    task: str = ""
    input_tokens: int | None = None
    output_tokens: int | None = None


class ScriptedProvider:
    def __init__(self, entries: Iterable[ScriptEntry]):
        self._table: dict[tuple[str, str, str, int | None], ScriptEntry] = {}
        for entry in entries:
            key = (entry.task, entry.path, entry.phase, entry.round)
            if key in self._table:
                raise ProviderError(f"duplicate script entry for {key}")
            self._table[key] = entry

    def __len__(self) -> int:
        return len(self._table)

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedProvider:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
        if not isinstance(doc, dict) or "entries" not in doc:
            raise ProviderError(f"script file {path} must have a top-level 'entries' list")
        entries = []
        for raw in doc["entries"]:
            try:
                entries.append(
                    ScriptEntry(
                        path=str(raw["path"]),
                        phase=str(raw["phase"]),
                        content=str(raw["content"]),
                        round=None if raw.get("round") in (None, "*") else int(raw["round"]),
                        task=str(raw.get("task", "")),
                        input_tokens=raw.get("input_tokens"),
                        output_tokens=raw.get("output_tokens"),
                    )
                )
            except KeyError as exc:
                raise ProviderError(f"script entry missing field {exc}: {raw!r}") from None
        return cls(entries)

    def _lookup(self, key: CallKey) -> ScriptEntry:
        path = key.path.key()
        candidates = (
            (key.task_id, path, key.phase, key.round),
            (key.task_id, path, key.phase, None),
            ("", path, key.phase, key.round),
            ("", path, key.phase, None),
        )
        for candidate in candidates:
            entry = self._table.get(candidate)
            if entry is not None:
                return entry
        raise MissingScriptEntry(str(key))

    def complete(self, request: CompletionRequest, key: CallKey) -> CompletionResponse:
        entry = self._lookup(key)
        input_tokens = entry.input_tokens
        if input_tokens is None:
            input_tokens = word_count(request.prompt_text())
        output_tokens = entry.output_tokens
        if output_tokens is None:
            output_tokens = word_count(entry.content)
        return CompletionResponse(
            content=entry.content,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
        )

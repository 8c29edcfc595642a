"""Persist successful programs and serve them for similar future queries.

Exact lookups use a hash of the normalized query text; optional embedding
vectors enable similarity hits above a conservative cosine threshold. The
store is one append-compacted JSON-lines file guarded by an exclusive lock.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from filelock import FileLock

from .composer import Program, ToolCall
from .errors import ProcalcError
from .planner import Query

DEFAULT_THRESHOLD = 0.92


class StorageIOError(ProcalcError):
    pass


def normalize_query(text: str) -> str:
    """Lowercase, collapse whitespace, strip trailing punctuation."""
    collapsed = re.sub(r"\s+", " ", text.lower()).strip()
    return collapsed.rstrip(".!?,;: ")


def signature_of(text: str) -> str:
    return hashlib.sha256(normalize_query(text).encode("utf-8")).hexdigest()


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


@dataclass
class CacheEntry:
    signature: str
    query_text: str
    program: Program
    embedding: Optional[list[float]] = None
    created_at: float = 0.0
    hit_count: int = 0


def _program_to_dict(program: Program) -> dict:
    return {
        "program_id": program.program_id,
        "language_tag": program.language_tag,
        "source": program.source,
        "revision_index": program.revision_index,
        "origin": program.origin,
        "tool_calls": [
            {"tool_id": c.tool_id, "line_span": list(c.line_span)} for c in program.tool_calls
        ],
    }


def _program_from_dict(doc: dict) -> Program:
    return Program(
        program_id=doc["program_id"],
        language_tag=doc["language_tag"],
        source=doc["source"],
        revision_index=doc["revision_index"],
        origin=doc["origin"],
        tool_calls=tuple(
            ToolCall(tool_id=c["tool_id"], line_span=tuple(c["line_span"]))
            for c in doc.get("tool_calls", [])
        ),
    )


class ProgramCache:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = FileLock(str(self.path) + ".lock")
        self._entries: dict[str, CacheEntry] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        try:
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    doc = json.loads(line)
                    entry = CacheEntry(
                        signature=doc["signature"],
                        query_text=doc["query_text"],
                        program=_program_from_dict(doc["program"]),
                        embedding=doc.get("embedding"),
                        created_at=doc["created_at"],
                        hit_count=doc.get("hit_count", 0),
                    )
                    self._entries[entry.signature] = entry  # later records win
        except (OSError, ValueError, KeyError) as exc:
            raise StorageIOError(f"cannot load cache {self.path}: {exc}") from exc

    def _save(self) -> None:
        try:
            with self._lock:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                tmp = self.path.with_suffix(".tmp")
                with open(tmp, "w", encoding="utf-8") as fh:
                    for entry in self._entries.values():
                        fh.write(
                            json.dumps(
                                {
                                    "signature": entry.signature,
                                    "query_text": entry.query_text,
                                    "program": _program_to_dict(entry.program),
                                    "embedding": entry.embedding,
                                    "created_at": entry.created_at,
                                    "hit_count": entry.hit_count,
                                }
                            )
                            + "\n"
                        )
                tmp.replace(self.path)
        except OSError as exc:
            raise StorageIOError(f"cannot write cache {self.path}: {exc}") from exc

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[CacheEntry]:
        return sorted(self._entries.values(), key=lambda e: e.created_at)

    def put(
        self,
        query: Query,
        program: Program,
        embed_fn: Optional[Callable[[str], Sequence[float]]] = None,
    ) -> None:
        """Store under the normalized-text signature; latest wins.

        Callers assert the program's last execution succeeded.
        """
        signature = signature_of(query.text)
        embedding = list(embed_fn(query.text)) if embed_fn else None
        self._entries[signature] = CacheEntry(
            signature=signature,
            query_text=query.text,
            program=program,
            embedding=embedding,
            created_at=time.time(),
            hit_count=self._entries.get(signature, CacheEntry("", "", program)).hit_count,
        )
        self._save()

    def get(
        self,
        query: Query,
        embed_fn: Optional[Callable[[str], Sequence[float]]] = None,
        threshold: float = DEFAULT_THRESHOLD,
    ) -> Optional[CacheEntry]:
        """Exact signature match first, then best-cosine entry above threshold."""
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        entry = self._entries.get(signature_of(query.text))
        if entry is None and embed_fn is not None:
            vector = list(embed_fn(query.text))
            best: Optional[tuple[float, float, CacheEntry]] = None
            for cand in self._entries.values():
                if cand.embedding is None:
                    continue
                score = cosine(vector, cand.embedding)
                if score < threshold:
                    continue
                key = (score, cand.created_at)
                if best is None or key > (best[0], best[1]):
                    best = (score, cand.created_at, cand)
            if best is not None:
                entry = best[2]
        if entry is None:
            return None
        entry.hit_count += 1
        entry.program = replace(entry.program, origin="cache", revision_index=0)
        self._save()
        return entry

    def clear(self) -> int:
        count = len(self._entries)
        self._entries.clear()
        self._save()
        return count

    def stats(self) -> dict:
        return {
            "entries": len(self._entries),
            "total_hits": sum(e.hit_count for e in self._entries.values()),
            "path": str(self.path),
        }

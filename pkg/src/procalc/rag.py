"""Knowledge ingestion and retrieval.

Sliding-window character chunking with source metadata, a pluggable
embedding backend (the bundled one is deterministic hashed bag-of-words so
every test runs offline), a flat-scan vector index, and optional reranking.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import ProcalcError

DEFAULT_WINDOW_CHARS = 800
DEFAULT_STRIDE_CHARS = 600
BOW_DIMENSION = 256

_WORD_RE = re.compile(r"[a-z0-9_]+")


class RagError(ProcalcError):
    pass


class InvalidWindowError(RagError):
    pass


class DuplicateChunkError(RagError):
    pass


class DimensionMismatchError(RagError):
    pass


class EmptyIndexError(RagError):
    pass


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    section_title: str
    position: int
    text: str
    char_offset: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("chunk text must be non-empty")
        if self.position < 0 or self.char_offset < 0:
            raise ValueError("position and char_offset must be >= 0")


@dataclass(frozen=True)
class RetrievalHit:
    chunk: Chunk
    score: float
    stage: str  # embed | rerank


class EmbeddingBackend(Protocol):
    dimension: int
    deterministic: bool

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashedBagOfWordsBackend:
    """Deterministic token-hash vectors; no model download, fully offline."""

    def __init__(self, dimension: int = BOW_DIMENSION):
        self.dimension = dimension
        self.deterministic = True

    def _bucket(self, token: str) -> int:
        # FNV-1a: stable across processes, unlike hash()
        h = 2166136261
        for byte in token.encode("utf-8"):
            h = ((h ^ byte) * 16777619) & 0xFFFFFFFF
        return h % self.dimension

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension), dtype=np.float32)
        for row, text in enumerate(texts):
            for token in _WORD_RE.findall(text.lower()):
                out[row, self._bucket(token)] += 1.0
        return out


class HttpEmbeddingBackend:
    """Client for an embeddings endpoint speaking the de-facto JSON shape.

    The vector dimension is probed from the first response when not given.
    """

    def __init__(self, url: str, dimension: Optional[int] = None, timeout_s: float = 30.0):
        self.url = url
        self.dimension = dimension
        self.deterministic = False
        self.timeout_s = timeout_s

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        import requests

        resp = requests.post(self.url, json={"input": list(texts)}, timeout=self.timeout_s)
        resp.raise_for_status()
        data = resp.json()["data"]
        vectors = np.asarray([d["embedding"] for d in data], dtype=np.float32)
        if self.dimension is None and vectors.size:
            self.dimension = vectors.shape[1]
        return vectors


Reranker = Callable[[str, Sequence[str]], Sequence[float]]


class HttpReranker:
    def __init__(self, url: str, timeout_s: float = 30.0):
        self.url = url
        self.timeout_s = timeout_s

    def __call__(self, query: str, texts: Sequence[str]) -> Sequence[float]:
        import requests

        resp = requests.post(
            self.url, json={"query": query, "documents": list(texts)}, timeout=self.timeout_s
        )
        resp.raise_for_status()
        return [float(s) for s in resp.json()["scores"]]


def chunk_document(
    doc_id: str,
    section_title: str,
    text: str,
    window_chars: int = DEFAULT_WINDOW_CHARS,
    stride_chars: int = DEFAULT_STRIDE_CHARS,
) -> list[Chunk]:
    """Sliding-window chunks at offsets 0, stride, 2*stride, ...

    Emission stops after the first truncated (shorter-than-window) chunk:
    any later chunk would be wholly contained in it.
    """
    if window_chars < 1 or stride_chars < 1:
        raise InvalidWindowError("window_chars and stride_chars must be positive")
    if stride_chars > window_chars:
        raise InvalidWindowError("stride_chars must be <= window_chars")
    chunks: list[Chunk] = []
    offset = 0
    position = 0
    length = len(text)
    while offset < length:
        piece = text[offset : offset + window_chars]
        chunks.append(
            Chunk(
                chunk_id=f"{doc_id}:{position}",
                doc_id=doc_id,
                section_title=section_title,
                position=position,
                text=piece,
                char_offset=offset,
            )
        )
        if offset + window_chars >= length and len(piece) < window_chars:
            break  # truncated chunk reached the end of the document
        offset += stride_chars
        position += 1
    return chunks


def reconstruct(chunks: Sequence[Chunk]) -> str:
    """Concatenate a document's chunks with overlap removal."""
    ordered = sorted(chunks, key=lambda c: c.position)
    out = []
    covered = 0
    for chunk in ordered:
        start = chunk.char_offset
        end = start + len(chunk.text)
        if end <= covered:
            continue
        out.append(chunk.text[max(0, covered - start):])
        covered = end
    return "".join(out)


class VectorIndex:
    """Flat-scan cosine index over chunk vectors; desk scale by design."""

    def __init__(self, backend: EmbeddingBackend):
        self.backend = backend
        self.chunks: list[Chunk] = []
        self._ids: set[str] = set()
        self._vectors: Optional[np.ndarray] = (
            np.zeros((0, backend.dimension), dtype=np.float32)
            if backend.dimension is not None
            else None
        )

    def __len__(self) -> int:
        return len(self.chunks)

    def index_add(self, chunks: Sequence[Chunk]) -> int:
        if not chunks:
            return 0
        for chunk in chunks:
            if chunk.chunk_id in self._ids:
                raise DuplicateChunkError(f"chunk {chunk.chunk_id!r} already indexed")
        vectors = np.asarray(self.backend.embed([c.text for c in chunks]), dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(chunks):
            raise DimensionMismatchError(
                f"backend returned shape {vectors.shape} for {len(chunks)} chunks"
            )
        if self.backend.dimension is not None and vectors.shape[1] != self.backend.dimension:
            raise DimensionMismatchError(
                f"backend returned dimension {vectors.shape[1]}, "
                f"expected {self.backend.dimension}"
            )
        if self._vectors is None:
            self._vectors = np.zeros((0, vectors.shape[1]), dtype=np.float32)
        if vectors.shape[1] != self._vectors.shape[1]:
            raise DimensionMismatchError(
                f"vector dimension changed from {self._vectors.shape[1]} to {vectors.shape[1]}"
            )
        self._vectors = np.vstack([self._vectors, vectors])
        for chunk in chunks:
            self.chunks.append(chunk)
            self._ids.add(chunk.chunk_id)
        return len(chunks)

    def retrieve(
        self,
        query_text: str,
        k: int,
        reranker: Optional[Reranker] = None,
    ) -> list[RetrievalHit]:
        """Cosine top-k (stage=embed); reranker re-scores and re-sorts them."""
        if not self.chunks:
            raise EmptyIndexError("index is empty")
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(self.backend.embed([query_text]), dtype=np.float32)[0]
        qn = float(np.linalg.norm(q))
        norms = np.linalg.norm(self._vectors, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = self._vectors @ q / np.where(norms * qn == 0.0, 1.0, norms * qn)
        scores = np.nan_to_num(scores)
        order = sorted(
            range(len(self.chunks)),
            key=lambda i: (-float(scores[i]), self.chunks[i].chunk_id),
        )[:k]
        hits = [
            RetrievalHit(chunk=self.chunks[i], score=float(scores[i]), stage="embed")
            for i in order
        ]
        if reranker is not None:
            new_scores = reranker(query_text, [h.chunk.text for h in hits])
            hits = [
                RetrievalHit(chunk=h.chunk, score=float(s), stage="rerank")
                for h, s in zip(hits, new_scores)
            ]
            hits.sort(key=lambda h: (-h.score, h.chunk.chunk_id))
        return hits

    def save(self, meta_path: str | Path, vector_path: str | Path) -> None:
        with open(meta_path, "w", encoding="utf-8") as fh:
            for chunk in self.chunks:
                fh.write(
                    json.dumps(
                        {
                            "chunk_id": chunk.chunk_id,
                            "doc_id": chunk.doc_id,
                            "section_title": chunk.section_title,
                            "position": chunk.position,
                            "text": chunk.text,
                            "char_offset": chunk.char_offset,
                        }
                    )
                    + "\n"
                )
        np.save(vector_path, self._vectors)

    @classmethod
    def load(
        cls, backend: EmbeddingBackend, meta_path: str | Path, vector_path: str | Path
    ) -> "VectorIndex":
        index = cls(backend)
        chunks = []
        with open(meta_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                doc = json.loads(line)
                chunks.append(Chunk(**doc))
        vectors = np.load(vector_path)
        if chunks and vectors.shape[0] != len(chunks):
            raise DimensionMismatchError("persisted vectors do not match metadata")
        if backend.dimension is None and vectors.ndim == 2:
            backend.dimension = int(vectors.shape[1])
        elif chunks and vectors.shape[1] != backend.dimension:
            raise DimensionMismatchError("persisted vectors do not match backend dimension")
        index.chunks = chunks
        index._ids = {c.chunk_id for c in chunks}
        index._vectors = vectors.astype(np.float32)
        return index

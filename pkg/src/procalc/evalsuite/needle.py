"""Needle-in-a-haystack retrieval stress test.

One on-topic chunk is planted per query among many distractor documents; the
runner scores per-query precision/recall/F1 of the retrieved chunk ids and
reports their means. A deterministic corpus builder bundles the standard
100-document / 20-query setup so the suite runs offline.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Sequence

from ..rag import Chunk

_NOISE_WORDS = (
    "pump valve stream duty balance column stage feed reboiler condenser "
    "pressure vessel drum compressor exchanger utility recycle purge mixer "
    "splitter heater cooler tray packing reflux holdup inventory margin"
).split()


@dataclass(frozen=True)
class QaPair:
    query_id: str
    query_text: str
    relevant_chunk_ids: frozenset[str]


@dataclass(frozen=True)
class QueryScore:
    query_id: str
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class NeedleReport:
    per_query: tuple[QueryScore, ...]
    mean_precision: float
    mean_recall: float
    mean_f1: float


def needle_run(
    qa_pairs: Sequence[QaPair],
    retrieve_fn: Callable[[str, int], Sequence[str]],
    k: int,
) -> NeedleReport:
    """Score retrieve_fn on each Q&A pair at depth k."""
    if not qa_pairs:
        raise ValueError("no qa pairs")
    scores = []
    for pair in qa_pairs:
        retrieved = list(retrieve_fn(pair.query_text, k))
        hit = len(set(retrieved) & pair.relevant_chunk_ids)
        precision = hit / len(retrieved) if retrieved else 0.0
        recall = hit / len(pair.relevant_chunk_ids)
        f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        scores.append(QueryScore(pair.query_id, precision, recall, f1))
    n = len(scores)
    return NeedleReport(
        per_query=tuple(scores),
        mean_precision=sum(s.precision for s in scores) / n,
        mean_recall=sum(s.recall for s in scores) / n,
        mean_f1=sum(s.f1 for s in scores) / n,
    )


def build_needle_corpus(
    num_docs: int = 100,
    num_queries: int = 20,
    seed: int = 13,
) -> tuple[list[Chunk], list[QaPair]]:
    """Deterministic corpus: num_queries needle docs among noise documents.

    Each needle carries a unique calibration token shared only with its
    query, so a lexical or bag-of-words backend must rank it first.
    """
    rng = random.Random(seed)
    chunks: list[Chunk] = []
    qa_pairs: list[QaPair] = []
    for i in range(num_docs):
        doc_id = f"doc{i:03d}"
        noise = " ".join(rng.choice(_NOISE_WORDS) for _ in range(40))
        if i < num_queries:
            # repeated calibration token: keeps the needle on top even when
            # its hash bucket collides with a frequent noise word
            token = " ".join([f"zq{i:03d}calib"] * 6)
            fact = f"the {token} rating for rig {i} equals {rng.randint(2, 97)} units"
            text = f"{noise} {fact} {noise}"
            chunk_id = f"{doc_id}:0"
            qa_pairs.append(
                QaPair(
                    query_id=f"q{i:03d}",
                    query_text=f"what is the {token} rating",
                    relevant_chunk_ids=frozenset({chunk_id}),
                )
            )
        else:
            text = noise
        chunks.append(
            Chunk(
                chunk_id=f"{doc_id}:0",
                doc_id=doc_id,
                section_title="operations log",
                position=0,
                text=text,
                char_offset=0,
            )
        )
    return chunks, qa_pairs

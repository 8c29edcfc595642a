from __future__ import annotations

import pytest

from procalc.evalsuite.needle import QaPair, build_needle_corpus, needle_run
from procalc.rag import HashedBagOfWordsBackend, VectorIndex

TOL = 1e-9


def qa(qid, relevant):
    return QaPair(query_id=qid, query_text=qid, relevant_chunk_ids=frozenset(relevant))


def test_single_relevant_at_rank_one():
    report = needle_run([qa("q1", {"c1"})], lambda q, k: ["c1", "x", "y", "z", "w"], k=5)
    row = report.per_query[0]
    assert row.precision == pytest.approx(0.2, abs=TOL)
    assert row.recall == pytest.approx(1.0, abs=TOL)
    assert row.f1 == pytest.approx(1 / 3, abs=1e-6)


def test_relevant_not_retrieved():
    report = needle_run([qa("q1", {"c1"})], lambda q, k: ["a", "b"], k=2)
    row = report.per_query[0]
    assert row.recall == 0.0
    assert row.f1 == 0.0


def test_perfect_retrieval():
    report = needle_run([qa("q1", {"a", "b"})], lambda q, k: ["a", "b"], k=2)
    row = report.per_query[0]
    assert row.precision == row.recall == row.f1 == 1.0


def test_means_over_queries():
    def retrieve(query, k):
        return ["c1"] if query == "q1" else ["x"]

    report = needle_run([qa("q1", {"c1"}), qa("q2", {"c2"})], retrieve, k=1)
    assert report.mean_precision == pytest.approx(0.5, abs=TOL)
    assert report.mean_recall == pytest.approx(0.5, abs=TOL)


def test_bundled_corpus_hits_thresholds():
    chunks, qa_pairs = build_needle_corpus()
    assert len(chunks) == 100
    assert len(qa_pairs) == 20
    index = VectorIndex(HashedBagOfWordsBackend())
    index.index_add(chunks)

    def retrieve_ids(query_text, k):
        return [hit.chunk.chunk_id for hit in index.retrieve(query_text, k)]

    report = needle_run(qa_pairs, retrieve_ids, k=5)
    assert report.mean_recall == pytest.approx(1.0, abs=TOL)
    assert report.mean_precision == pytest.approx(0.2, abs=TOL)
    assert report.mean_f1 == pytest.approx(1 / 3, abs=1e-6)


def test_corpus_is_deterministic():
    a_chunks, a_pairs = build_needle_corpus()
    b_chunks, b_pairs = build_needle_corpus()
    assert a_chunks == b_chunks
    assert a_pairs == b_pairs

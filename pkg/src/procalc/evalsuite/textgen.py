"""Response-generation metrics: BLEU, ROUGE-L, Exact Match.

Tokenization splits punctuation from words, then whitespace. BLEU uses
clipped modified n-gram precision with epsilon smoothing of zero counts and
a brevity penalty; the effective n-gram order is capped at the candidate
length so identical texts always score exactly 1.0.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class TextPair:
    candidate: str
    reference: str

    def __post_init__(self):
        if not self.reference:
            raise ValueError("reference must be non-empty")


@dataclass(frozen=True)
class BleuConfig:
    max_n: int = 4
    weights: tuple[float, ...] = ()  # empty -> uniform 1/max_n
    epsilon: float = 1e-9

    def __post_init__(self):
        if self.max_n < 1:
            raise ValueError("max_n must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.weights and abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


@dataclass(frozen=True)
class RougeConfig:
    beta: float = 1.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def bleu(pair: TextPair, config: BleuConfig = BleuConfig()) -> float:
    """BP * exp(sum w_n log p_n) with clipping and epsilon smoothing."""
    cand = tokenize(pair.candidate)
    ref = tokenize(pair.reference)
    if not cand:
        return 0.0
    n_eff = min(config.max_n, len(cand))
    if config.weights:
        raw = config.weights[:n_eff]
        weights = [w / sum(raw) for w in raw]
    else:
        weights = [1.0 / n_eff] * n_eff
    log_sum = 0.0
    for n in range(1, n_eff + 1):
        cand_grams = _ngrams(cand, n)
        ref_counts = Counter(_ngrams(ref, n))
        clipped = sum(min(count, ref_counts[gram]) for gram, count in Counter(cand_grams).items())
        p_n = clipped / len(cand_grams) if clipped > 0 else config.epsilon
        log_sum += weights[n - 1] * math.log(p_n)
    c, r = len(cand), len(ref)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # single-row DP over token sequences
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b, start=1):
            row.append(prev[j - 1] + 1 if x == y else max(prev[j], row[j - 1]))
        prev = row
    return prev[-1]


def rouge_l(pair: TextPair, config: RougeConfig = RougeConfig()) -> float:
    """F-beta over LCS precision and recall; 0 when there is no LCS."""
    cand = tokenize(pair.candidate)
    ref = tokenize(pair.reference)
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    b2 = config.beta**2
    return (1 + b2) * precision * recall / (precision + b2 * recall)


def exact_match(pairs: Sequence[TextPair]) -> float:
    """Mean string equality after trimming trailing whitespace."""
    if not pairs:
        from .metrics import EmptyInputError

        raise EmptyInputError("no text pairs")
    hits = [p.candidate.rstrip() == p.reference.rstrip() for p in pairs]
    return sum(hits) / len(hits)

"""Instruction/question/answer dataset loading and deterministic splitting."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..errors import ProcalcError


class MalformedRecordError(ProcalcError):
    def __init__(self, path: str, line_number: int, detail: str):
        super().__init__(f"{path}:{line_number}: malformed record: {detail}")
        self.line_number = line_number


@dataclass(frozen=True)
class Record:
    instruction: str
    question: str
    answer: str


@dataclass(frozen=True)
class Splits:
    train: tuple[Record, ...]
    val: tuple[Record, ...]
    test: tuple[Record, ...]


def load_dataset(path: str | Path) -> list[Record]:
    """One JSON record per line with instruction/question/answer fields."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                records.append(
                    Record(
                        instruction=doc["instruction"],
                        question=doc["question"],
                        answer=doc["answer"],
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRecordError(str(path), line_number, str(exc)) from exc
    if not records:
        raise MalformedRecordError(str(path), 0, "dataset is empty")
    return records


def split_dataset(
    records: Sequence[Record],
    seed: int,
    train_frac: float = 0.70,
    val_frac: float = 0.15,
) -> Splits:
    """Deterministic disjoint 70/15/15 cover, within one record of exact."""
    if not records:
        raise ValueError("no records to split")
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    n = len(shuffled)
    n_train = int(n * train_frac + 0.5)
    n_val = int(n * val_frac + 0.5)
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return Splits(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
    )

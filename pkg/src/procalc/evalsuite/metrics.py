"""Task-planning, tool-selection, and tool-calling metrics.

Planning metrics are per-query means; tool-calling metrics are pooled
(micro) ratios with zero-denominator queries excluded and counted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from ..errors import ProcalcError


class MetricsError(ProcalcError):
    pass


class EmptyInputError(MetricsError):
    pass


class MissingGradesError(MetricsError):
    pass


@dataclass(frozen=True)
class RankedSelection:
    query_id: str
    selected: tuple[str, ...]
    ground_truth: frozenset[str]
    grades: Optional[Mapping[str, int]] = None

    def __post_init__(self):
        if len(self.selected) != len(set(self.selected)):
            raise ValueError("selected list has duplicates")
        if self.grades is not None:
            stray = set(self.grades) - (set(self.ground_truth) | set(self.selected))
            if stray:
                raise ValueError(f"grades for unknown tools: {sorted(stray)}")


@dataclass(frozen=True)
class PlanJudgment:
    query_id: str
    tool_need_predicted: bool
    tool_need_actual: bool
    task_completed: bool
    plan_correct: bool


@dataclass(frozen=True)
class CallJudgment:
    query_id: str
    params_required: int
    params_consistent: int
    params_correct: int
    errors_encountered: int
    errors_handled: int

    def __post_init__(self):
        if min(self.params_required, self.params_consistent, self.params_correct,
               self.errors_encountered, self.errors_handled) < 0:
            raise ValueError("judgment counts must be >= 0")
        if self.params_consistent > self.params_required:
            raise ValueError("consistent cannot exceed required")
        if self.errors_handled > self.errors_encountered:
            raise ValueError("handled cannot exceed encountered")


@dataclass(frozen=True)
class PooledRatio:
    value: float
    included: int
    excluded: int

    def __float__(self) -> float:
        return self.value


def _mean_of(flags: Sequence[bool], what: str) -> float:
    if not flags:
        raise EmptyInputError(f"no judgments for {what}")
    return sum(flags) / len(flags)


def tool_usage_awareness(judgments: Sequence[PlanJudgment]) -> float:
    """Fraction of queries whose tool-need prediction matches the truth."""
    return _mean_of([j.tool_need_predicted == j.tool_need_actual for j in judgments],
                    "tool usage awareness")


def pass_rate(judgments: Sequence[PlanJudgment]) -> float:
    return _mean_of([j.task_completed for j in judgments], "pass rate")


def accuracy(judgments: Sequence[PlanJudgment]) -> float:
    return _mean_of([j.plan_correct for j in judgments], "accuracy")


def recall_at_k(selections: Sequence[RankedSelection], k: int) -> float:
    """Mean over queries of |top-k ∩ ground truth| / |ground truth|."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not selections:
        raise EmptyInputError("no selections")
    total = 0.0
    for sel in selections:
        if not sel.ground_truth:
            raise EmptyInputError(f"empty ground truth for query {sel.query_id}")
        top = set(sel.selected[:k])
        total += len(top & sel.ground_truth) / len(sel.ground_truth)
    return total / len(selections)


def _effective_grades(sel: RankedSelection) -> Mapping[str, int]:
    if sel.grades is not None:
        return sel.grades
    if sel.ground_truth:
        return {tool: 1 for tool in sel.ground_truth}
    raise MissingGradesError(
        f"query {sel.query_id}: no grades and no ground truth to derive them"
    )


def _dcg(grades_in_rank_order: Sequence[int], k: int) -> float:
    return sum(
        (2**g - 1) / math.log2(i + 2) for i, g in enumerate(grades_in_rank_order[:k])
    )


def ndcg_at_k(selections: Sequence[RankedSelection], k: int) -> float:
    """Mean NDCG@k; a query whose grades are all zero contributes 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not selections:
        raise EmptyInputError("no selections")
    total = 0.0
    for sel in selections:
        grades = _effective_grades(sel)
        in_order = [grades.get(tool, 0) for tool in sel.selected]
        ideal = sorted(grades.values(), reverse=True)
        idcg = _dcg(ideal, k)
        total += 0.0 if idcg == 0.0 else _dcg(in_order, k) / idcg
    return total / len(selections)


def comp_at_k(selections: Sequence[RankedSelection], k: int) -> float:
    """Mean indicator of whether the top-k selection covers the ground truth."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not selections:
        raise EmptyInputError("no selections")
    hits = [sel.ground_truth <= set(sel.selected[:k]) for sel in selections]
    return sum(hits) / len(hits)


def _pooled(
    judgments: Sequence[CallJudgment],
    numerator: str,
    denominator: str,
) -> PooledRatio:
    num = den = included = excluded = 0
    for j in judgments:
        d = getattr(j, denominator)
        if d == 0:
            excluded += 1
            continue
        included += 1
        num += getattr(j, numerator)
        den += d
    if den == 0:
        raise EmptyInputError(f"all {denominator} denominators are zero")
    return PooledRatio(value=num / den, included=included, excluded=excluded)


def consistency(judgments: Sequence[CallJudgment]) -> PooledRatio:
    """Pooled fraction of provided parameters consistent with stipulations."""
    return _pooled(judgments, "params_consistent", "params_required")


def param_correctness(judgments: Sequence[CallJudgment]) -> PooledRatio:
    return _pooled(judgments, "params_correct", "params_required")


def error_handling(judgments: Sequence[CallJudgment]) -> PooledRatio:
    return _pooled(judgments, "errors_handled", "errors_encountered")

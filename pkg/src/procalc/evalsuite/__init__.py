"""Four-stage tool-learning metric suite, gold-answer checks, needle
retrieval stress test, dataset loading, and ablation orchestration."""

from .metrics import (
    CallJudgment,
    PlanJudgment,
    PooledRatio,
    RankedSelection,
    accuracy,
    comp_at_k,
    consistency,
    error_handling,
    ndcg_at_k,
    param_correctness,
    pass_rate,
    recall_at_k,
    tool_usage_awareness,
)
from .textgen import BleuConfig, RougeConfig, TextPair, bleu, exact_match, rouge_l
from .gold import GoldProblem, GoldVerdict, check_gold
from .needle import NeedleReport, needle_run
from .datasets import load_dataset, split_dataset

__all__ = [
    "CallJudgment",
    "PlanJudgment",
    "PooledRatio",
    "RankedSelection",
    "accuracy",
    "comp_at_k",
    "consistency",
    "error_handling",
    "ndcg_at_k",
    "param_correctness",
    "pass_rate",
    "recall_at_k",
    "tool_usage_awareness",
    "BleuConfig",
    "RougeConfig",
    "TextPair",
    "bleu",
    "exact_match",
    "rouge_l",
    "GoldProblem",
    "GoldVerdict",
    "check_gold",
    "NeedleReport",
    "needle_run",
    "load_dataset",
    "split_dataset",
]

"""Metric-suite runner over prediction/gold files plus table rendering.

Predictions and gold are JSON-lines files joined on query_id; the report is
an aligned text table grouped by stage plus a machine-readable JSON mirror.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from ..errors import ProcalcError
from .metrics import (
    CallJudgment,
    PlanJudgment,
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
from .textgen import TextPair, bleu, exact_match, rouge_l


class ReportError(ProcalcError):
    pass


def _load_jsonl(path: str | Path) -> dict[str, dict]:
    rows = {}
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                rows[doc["query_id"]] = doc
            except (ValueError, KeyError) as exc:
                raise ReportError(f"{path}:{line_number}: malformed record: {exc}") from exc
    if not rows:
        raise ReportError(f"{path}: no records")
    return rows


def run_metrics_suite(pred_path: str | Path, gold_path: str | Path, k: int = 5) -> dict:
    """Join predictions with gold and compute every stage's metrics."""
    preds = _load_jsonl(pred_path)
    golds = _load_jsonl(gold_path)
    shared = sorted(set(preds) & set(golds))
    if not shared:
        raise ReportError("prediction and gold files share no query_id")

    plan_rows, selections, call_rows, pairs = [], [], [], []
    for qid in shared:
        p, g = preds[qid], golds[qid]
        plan_rows.append(
            PlanJudgment(
                query_id=qid,
                tool_need_predicted=bool(p.get("tool_need", False)),
                tool_need_actual=bool(g.get("tool_need", False)),
                task_completed=bool(p.get("task_completed", False)),
                plan_correct=bool(p.get("plan_correct", False)),
            )
        )
        if "selected" in p and g.get("tools"):
            selections.append(
                RankedSelection(
                    query_id=qid,
                    selected=tuple(p["selected"]),
                    ground_truth=frozenset(g["tools"]),
                    grades=g.get("grades"),
                )
            )
        if "params_consistent" in p:
            call_rows.append(
                CallJudgment(
                    query_id=qid,
                    params_required=int(g.get("params_required", 0)),
                    params_consistent=int(p.get("params_consistent", 0)),
                    params_correct=int(p.get("params_correct", 0)),
                    errors_encountered=int(p.get("errors_encountered", 0)),
                    errors_handled=int(p.get("errors_handled", 0)),
                )
            )
        if p.get("response") is not None and g.get("reference"):
            pairs.append(TextPair(candidate=p["response"], reference=g["reference"]))

    report: dict = {"queries": len(shared), "k": k}
    report["task_planning"] = {
        "tool_usage_awareness": tool_usage_awareness(plan_rows),
        "pass_rate": pass_rate(plan_rows),
        "accuracy": accuracy(plan_rows),
    }
    if selections:
        report["tool_selection"] = {
            "recall_at_k": recall_at_k(selections, k),
            "ndcg_at_k": ndcg_at_k(selections, k),
            "comp_at_k": comp_at_k(selections, k),
        }
    if call_rows:
        cons = consistency(call_rows)
        pe = param_correctness(call_rows)
        try:
            eh: Optional[object] = error_handling(call_rows)
        except ProcalcError:
            eh = None
        report["tool_calling"] = {
            "consistency": cons.value,
            "param_correctness": pe.value,
            "error_handling": eh.value if eh else None,
            "excluded_param_queries": cons.excluded,
            "excluded_error_queries": eh.excluded if eh else len(call_rows),
        }
    if pairs:
        report["response_generation"] = {
            "bleu": sum(bleu(p) for p in pairs) / len(pairs),
            "rouge_l": sum(rouge_l(p) for p in pairs) / len(pairs),
            "exact_match": exact_match(pairs),
        }
    return report


def format_table(title: str, rows: list[tuple[str, str]]) -> str:
    width = max((len(name) for name, _ in rows), default=10)
    lines = [title, "-" * len(title)]
    for name, value in rows:
        lines.append(f"{name.ljust(width)}  {value}")
    return "\n".join(lines)


def render_report(report: dict) -> str:
    """Aligned text tables, one per stage."""
    sections = []
    order = [
        ("task_planning", "Task planning"),
        ("tool_selection", "Tool selection"),
        ("tool_calling", "Tool calling"),
        ("response_generation", "Response generation"),
    ]
    for key, title in order:
        stage = report.get(key)
        if not stage:
            continue
        rows = []
        for name, value in stage.items():
            if isinstance(value, float):
                rows.append((name, f"{value:.4f}"))
            else:
                rows.append((name, str(value)))
        sections.append(format_table(title, rows))
    sections.append(f"queries: {report.get('queries')}  k: {report.get('k')}")
    return "\n\n".join(sections)

"""
End-task metrics (EM, unigram F1, accuracy), context quality metrics
(context precision, retrieval recall / precision) and length reports.
"""

import json
import logging
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence

from ctxfilter.errors import DataError
from ctxfilter.models import EvalSummary, Example, LengthRow, Passage, SilverRecord, TaskKind
from ctxfilter.services.dataset_io import DatasetItem
from ctxfilter.services.measures import contains_output, token_f1
from ctxfilter.services.silver_service import format_passage, top_k_passages
from ctxfilter.services.text_service import normalize_answer, tokenize

logger = logging.getLogger(__name__)

ANSWER_STRING = "answer_string"
PROVENANCE = "provenance"

DEFAULT_METRICS = {
    TaskKind.EXTRACTIVE_QA: "em",
    TaskKind.MULTIHOP_QA: "f1",
    TaskKind.LONGFORM_QA: "f1",
    TaskKind.FACT_VERIFICATION: "accuracy",
    TaskKind.DIALOG: "f1",
}

MODE_ORDER = ("full", "psg", "filco")


# --- End-task metrics ---

def exact_match(prediction: str, answers: Sequence[str]) -> int:
    pred = normalize_answer(prediction)
    return int(any(pred == normalize_answer(a) for a in answers))


def f1_metric(prediction: str, answers: Sequence[str]) -> float:
    pred_tokens = tokenize(normalize_answer(prediction))
    return max(token_f1(pred_tokens, tokenize(normalize_answer(a))) for a in answers)


METRICS = {
    "em": exact_match,
    # labels are single tokens, so EM over normalized labels is accuracy
    "accuracy": exact_match,
    "f1": f1_metric,
}


def context_precision(outputs: Sequence[str], context: str) -> float:
    """Share of output tokens (multiset) found in the context, max over outputs."""
    context_tokens = Counter(tokenize(context))
    if not context_tokens:
        return 0.0
    best = 0.0
    for output in outputs:
        output_tokens = Counter(tokenize(output))
        total = sum(output_tokens.values())
        if total:
            best = max(best, sum((output_tokens & context_tokens).values()) / total)
    return best


# --- Retrieval statistics ---

def is_positive(example: Example, passages: List[Passage], k: int, mode: str = ANSWER_STRING) -> bool:
    top = top_k_passages(passages, k)
    if mode == ANSWER_STRING:
        return any(contains_output(p.text, example.outputs) for p in top)
    if mode == PROVENANCE:
        if example.provenance is None or any(p.provenance is None for p in top):
            raise DataError(f"provenance mode needs 'provenance' on example {example.id!r} and its passages")
        wanted = set(example.provenance)
        return any(p.provenance in wanted for p in top)
    raise ValueError(f"Unknown positive-passage mode: {mode}")


def retrieval_recall(dataset: List[DatasetItem], k: int, mode: str = ANSWER_STRING) -> float:
    """Percentage of examples with at least one positive passage in the top k."""
    if not dataset:
        raise DataError("retrieval recall is undefined on an empty dataset")
    hits = sum(1 for example, passages in dataset if is_positive(example, passages, k, mode))
    return 100.0 * hits / len(dataset)


def retrieval_precision(dataset: List[DatasetItem], k: int, mode: str = ANSWER_STRING) -> float:
    """Mean context precision (x100) of the top-k passages, over positive examples only."""
    values = []
    for example, passages in dataset:
        if is_positive(example, passages, k, mode):
            context = "\n".join(format_passage(p) for p in top_k_passages(passages, k))
            values.append(context_precision(example.outputs, context))
    return 100.0 * sum(values) / len(values) if values else 0.0


# --- Length reports ---

def _mean(values: List[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _reduction(value: float, baseline: Optional[float]) -> Optional[float]:
    if not baseline:
        return None
    return 100.0 * (1.0 - value / baseline)


def length_report(records_by_mode: Dict[str, List[SilverRecord]]) -> List[LengthRow]:
    """Mean input/context tokens per mode and reduction relative to the full mode."""
    modes = [m for m in MODE_ORDER if m in records_by_mode]
    modes += sorted(m for m in records_by_mode if m not in MODE_ORDER)

    full = records_by_mode.get("full")
    full_input = _mean([r.meta.input_tokens for r in full]) if full else None
    full_context = _mean([r.meta.context_tokens for r in full]) if full else None

    rows = []
    for mode in modes:
        records = records_by_mode[mode]
        mean_input = _mean([r.meta.input_tokens for r in records])
        mean_context = _mean([r.meta.context_tokens for r in records])
        rows.append(LengthRow(
            mode=mode,
            support=len(records),
            mean_input_tokens=mean_input,
            mean_context_tokens=mean_context,
            input_reduction=_reduction(mean_input, full_input),
            context_reduction=_reduction(mean_context, full_context),
        ))
    return rows


# --- Prediction evaluation ---

def _positive_top1(example: Example, passages: List[Passage]) -> bool:
    if example.task_kind == TaskKind.EXTRACTIVE_QA:
        return is_positive(example, passages, 1, ANSWER_STRING)
    try:
        return is_positive(example, passages, 1, PROVENANCE)
    except DataError:
        logger.warning(f"[Eval] {example.id}: no provenance, falling back to answer-string positives")
        return is_positive(example, passages, 1, ANSWER_STRING)


def evaluate(predictions: Dict[str, str], dataset: List[DatasetItem], metric: str = "em",
             split_by_positive: bool = False) -> EvalSummary:
    if metric not in METRICS:
        raise ValueError(f"Unknown metric: {metric}. Choose from {sorted(METRICS)}")
    missing = [example.id for example, _ in dataset if example.id not in predictions]
    if missing:
        shown = ", ".join(missing[:20]) + (f" ... (+{len(missing) - 20} more)" if len(missing) > 20 else "")
        raise DataError(f"missing predictions for {len(missing)} example(s): {shown}")

    metric_fn = METRICS[metric]
    scores = [float(metric_fn(predictions[example.id], example.outputs)) for example, _ in dataset]
    summary = EvalSummary(metric=metric, scores=scores, mean=100.0 * _mean(scores), support=len(scores))

    if split_by_positive:
        positive, negative = [], []
        for score, (example, passages) in zip(scores, dataset):
            (positive if _positive_top1(example, passages) else negative).append(score)
        summary.positive_mean = 100.0 * _mean(positive)
        summary.positive_support = len(positive)
        summary.negative_mean = 100.0 * _mean(negative)
        summary.negative_support = len(negative)
    return summary


# --- Rendering ---

def format_table(headers: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Plain-text table with left-aligned text and right-aligned numbers."""
    def cell(value: object) -> str:
        if value is None:
            return "-"
        if isinstance(value, float):
            return f"{value:.2f}"
        return str(value)

    body = [[cell(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in body:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]

    def line(cells: Sequence[str]) -> str:
        out = []
        for text, width in zip(cells, widths):
            out.append(text.rjust(width) if _numeric(text) else text.ljust(width))
        return "  ".join(out).rstrip()

    lines = [line(list(headers)), "  ".join("-" * w for w in widths)]
    lines += [line(row) for row in body]
    return "\n".join(lines)


def _numeric(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def summary_rows(summary: EvalSummary) -> List[List[object]]:
    rows = [["all", summary.support, summary.mean]]
    if summary.positive_support is not None:
        rows.append(["positive", summary.positive_support, summary.positive_mean])
        rows.append(["negative", summary.negative_support, summary.negative_mean])
    return rows


def render(payload: object, headers: Sequence[str], rows: Iterable[Sequence[object]], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True)
    return format_table(headers, rows)

"""
Span utility measures: string inclusion, unigram F1 and CXMI.
"""

import math
from collections import Counter
from typing import List, Sequence

from ctxfilter.errors import ScorerError
from ctxfilter.models import (
    Example,
    Measure,
    MeasureScore,
    PromptTemplates,
    Scale,
    Span,
    TaskKind,
)
from ctxfilter.services.scorers import SequenceScorer
from ctxfilter.services.silver_service import DEFAULT_TEMPLATES, build_scoring_input
from ctxfilter.services.text_service import tokenize

RECOMMENDED_MEASURES = {
    TaskKind.EXTRACTIVE_QA: Measure.STR_INC,
    TaskKind.FACT_VERIFICATION: Measure.LEXICAL,
    TaskKind.DIALOG: Measure.LEXICAL,
    TaskKind.MULTIHOP_QA: Measure.CXMI,
    TaskKind.LONGFORM_QA: Measure.CXMI,
}


def recommended_measure(task_kind: TaskKind) -> Measure:
    return RECOMMENDED_MEASURES[task_kind]


def contains_output(text: str, outputs: Sequence[str]) -> bool:
    lowered = text.lower()
    return any(o.lower() in lowered for o in outputs)


def str_inc(span: Span, outputs: Sequence[str]) -> MeasureScore:
    """1 iff the span contains any output as a raw case-insensitive substring."""
    return MeasureScore(value=1.0 if contains_output(span.text, outputs) else 0.0, scale=Scale.BINARY)


def token_f1(candidate: List[str], reference: List[str]) -> float:
    if not candidate or not reference:
        return 0.0
    overlap = sum((Counter(candidate) & Counter(reference)).values())
    # 2PR / (P + R), as one division so equal fractions give equal floats
    return 2 * overlap / (len(candidate) + len(reference))


def unigram_f1(candidate: str, reference: str) -> MeasureScore:
    return MeasureScore(value=token_f1(tokenize(candidate), tokenize(reference)), scale=Scale.UNIT_INTERVAL)


def lexical_references(example: Example) -> List[str]:
    """What a span is compared against: the claim for fact verification, else each output."""
    if example.task_kind == TaskKind.FACT_VERIFICATION:
        return [example.query]
    return list(example.outputs)


def lexical_target(example: Example) -> str:
    return " ".join(lexical_references(example))


def lexical_score(text: str, references: Sequence[str]) -> float:
    tokens = tokenize(text)
    return max(token_f1(tokens, tokenize(ref)) for ref in references)


def ratio_from_log(log_ratio: float) -> float:
    try:
        return math.exp(log_ratio)
    except OverflowError:
        return math.inf


def cxmi(scorer: SequenceScorer, span: Span, query: str, output: str,
         task_kind: TaskKind = TaskKind.EXTRACTIVE_QA,
         templates: PromptTemplates = DEFAULT_TEMPLATES) -> MeasureScore:
    """P(o | span + q) / P(o | q) under the scorer, computed in log space."""
    with_span = build_scoring_input(span.text, query, task_kind, templates)
    without = build_scoring_input("", query, task_kind, templates)
    try:
        numerator = scorer.score(with_span, output)
        denominator = scorer.score(without, output)
    except Exception as e:
        raise ScorerError(f"scorer failed: {e}", span.passage_rank, span.sentence_index) from e
    return MeasureScore(value=ratio_from_log(numerator - denominator), scale=Scale.RATIO)


def cxmi_log_ratios(scorer: SequenceScorer, contexts: Sequence[str], owners: Sequence[Span],
                    example: Example, templates: PromptTemplates = DEFAULT_TEMPLATES) -> List[float]:
    """
    Batched log-ratios for many candidate contexts, max over annotated outputs.
    `owners` names the span behind each context for error reporting.
    """
    if not contexts:
        return []
    requests = []
    for output in example.outputs:
        requests.append((build_scoring_input("", example.query, example.task_kind, templates), output))
        for text in contexts:
            requests.append((build_scoring_input(text, example.query, example.task_kind, templates), output))
    try:
        logprobs = scorer.score_many(requests)
    except Exception as e:
        index = getattr(e, "index", None)
        stop = getattr(e, "stop", None)
        owner = None
        # a failed batch covers several spans; only a single item names one
        if index is not None and (stop is None or stop - index == 1):
            offset = index % (len(contexts) + 1)
            owner = owners[offset - 1] if offset > 0 else None
        if owner is not None:
            raise ScorerError(f"scorer failed: {e}", owner.passage_rank, owner.sentence_index) from e
        raise ScorerError(f"scorer failed: {e}") from e

    best = [-math.inf] * len(contexts)
    stride = len(contexts) + 1
    for o in range(len(example.outputs)):
        base = logprobs[o * stride]
        for i in range(len(contexts)):
            best[i] = max(best[i], logprobs[o * stride + 1 + i] - base)
    return best


def passes_threshold(measure: Measure, value: float, threshold: float) -> bool:
    """Inclusion rule: str_inc hit, lexical F1 > lambda, cxmi ratio > lambda (value is log-ratio)."""
    if measure == Measure.STR_INC:
        return value >= 1.0
    if measure == Measure.CXMI:
        return value > math.log(threshold)
    return value > threshold

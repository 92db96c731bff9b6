"""
Candidate span enumeration and sentence-level silver context selection,
plus the passage-level (PSG) and unfiltered (FULL) baselines.
"""

import logging
from typing import List, Optional, Sequence, Tuple

from ctxfilter.errors import ConfigurationError
from ctxfilter.models import (
    ContextAssembly,
    ContextMode,
    Example,
    Fallback,
    FilterConfig,
    Measure,
    Passage,
    PromptTemplates,
    Selection,
    Span,
)
from ctxfilter.services.measures import (
    contains_output,
    cxmi_log_ratios,
    lexical_references,
    lexical_score,
    passes_threshold,
    ratio_from_log,
    recommended_measure,
)
from ctxfilter.services.scorers import SequenceScorer
from ctxfilter.services.silver_service import DEFAULT_TEMPLATES, format_passage, top_k_passages
from ctxfilter.services.text_service import count_tokens, split_sentences

logger = logging.getLogger(__name__)


def enumerate_spans(passages: List[Passage], k: int) -> List[Span]:
    """Sentence spans of passages ranked <= k, in (rank, sentence_index) order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    spans = []
    for passage in top_k_passages(passages, k):
        for fragment in split_sentences(passage.text):
            spans.append(Span(
                passage_rank=passage.rank,
                sentence_index=fragment.sentence_index,
                text=passage.text[fragment.char_start:fragment.char_end],
                char_start=fragment.char_start,
                char_end=fragment.char_end,
            ))
    return spans


def resolve_config(example: Example, config: FilterConfig, scorer: Optional[SequenceScorer]) -> FilterConfig:
    measure = config.measure
    if measure == Measure.AUTO:
        measure = recommended_measure(example.task_kind)
    if measure == Measure.CXMI and scorer is None:
        raise ConfigurationError("measure 'cxmi' needs a sequence scorer (--scorer)")
    return config.resolved(measure) if measure != config.measure else config


def _raw_scores(measure: Measure, example: Example, texts: Sequence[str], owners: Sequence[Span],
                scorer: Optional[SequenceScorer], templates: PromptTemplates) -> List[float]:
    """str_inc -> 0/1, lexical -> F1, cxmi -> log-ratio (monotone in the ratio)."""
    if measure == Measure.STR_INC:
        return [1.0 if contains_output(t, example.outputs) else 0.0 for t in texts]
    if measure == Measure.LEXICAL:
        references = lexical_references(example)
        return [lexical_score(t, references) for t in texts]
    return cxmi_log_ratios(scorer, texts, owners, example, templates)


def _reported(measure: Measure, value: float) -> float:
    return ratio_from_log(value) if measure == Measure.CXMI else value


def _selection(measure: Measure, chosen: List[Tuple[Span, float]], fallback_applied: bool = False) -> Selection:
    chosen = sorted(chosen, key=lambda pair: pair[0].key)
    return Selection(
        spans=[span for span, _ in chosen],
        scores=[_reported(measure, value) for _, value in chosen],
        measure_used=measure,
        fallback_applied=fallback_applied,
    )


def _apply_fallback(config: FilterConfig, scored: List[Tuple[Span, float]]) -> Selection:
    measure = config.measure
    if config.fallback == Fallback.EMPTY or not scored:
        return _selection(measure, [], fallback_applied=True)
    if config.fallback == Fallback.TOP_SENTENCE:
        best = min(scored, key=lambda pair: (-pair[1], pair[0].key))
        return _selection(measure, [best], fallback_applied=True)
    first_rank = scored[0][0].passage_rank
    return _selection(measure, [pair for pair in scored if pair[0].passage_rank == first_rank], fallback_applied=True)


def select_silver(example: Example, passages: List[Passage], config: FilterConfig,
                  scorer: Optional[SequenceScorer] = None,
                  templates: PromptTemplates = DEFAULT_TEMPLATES) -> Selection:
    """
    str_inc: first max_spans spans containing an output, in document order.
    lexical / cxmi: top max_spans spans scoring above the threshold; ties go to
    the smallest (rank, index). Nothing passes -> config.fallback.
    """
    config = resolve_config(example, config, scorer)
    measure = config.measure
    spans = enumerate_spans(passages, config.top_k)
    values = _raw_scores(measure, example, [s.text for s in spans], spans, scorer, templates)
    scored = list(zip(spans, values))
    threshold = config.effective_threshold

    passing = [pair for pair in scored if passes_threshold(measure, pair[1], threshold)]
    if measure == Measure.STR_INC:
        chosen = passing[:config.max_spans]
    else:
        chosen = sorted(passing, key=lambda pair: (-pair[1], pair[0].key))[:config.max_spans]

    if not chosen:
        logger.debug(f"[Selection] {example.id}: no span passes {measure.value} > {threshold}; "
                     f"fallback={config.fallback.value}")
        return _apply_fallback(config, scored)
    return _selection(measure, chosen)


def select_passages_psg(example: Example, passages: List[Passage], config: FilterConfig,
                        scorer: Optional[SequenceScorer] = None,
                        templates: PromptTemplates = DEFAULT_TEMPLATES) -> List[Passage]:
    """Keeps every top-k passage (as one whole span) that passes the measure's inclusion rule."""
    config = resolve_config(example, config, scorer)
    top = top_k_passages(passages, config.top_k)
    owners = [Span(passage_rank=p.rank, sentence_index=0, text=p.text, char_start=0, char_end=len(p.text))
              for p in top]
    values = _raw_scores(config.measure, example, [p.text for p in top], owners, scorer, templates)
    threshold = config.effective_threshold
    return [p for p, v in zip(top, values) if passes_threshold(config.measure, v, threshold)]


def assemble_context(mode: ContextMode, passages: List[Passage], selection: Optional[Selection] = None,
                     k: int = 1) -> ContextAssembly:
    """
    full  -> top-k passages ("title: text" lines)
    psg   -> the given (kept) passages, in rank order
    filco -> selected span texts joined by single spaces
    """
    if mode == ContextMode.FULL:
        used = top_k_passages(passages, k)
        text = "\n".join(format_passage(p) for p in used)
        return ContextAssembly(mode=mode, text=text, passages=used, token_count=count_tokens(text))
    if mode == ContextMode.PSG:
        used = sorted(passages, key=lambda p: p.rank)
        text = "\n".join(format_passage(p) for p in used)
        return ContextAssembly(mode=mode, text=text, passages=used, token_count=count_tokens(text))
    if selection is None:
        raise ValueError("filco assembly needs a selection")
    text = selection.text
    return ContextAssembly(mode=mode, text=text, selection=selection, token_count=count_tokens(text))

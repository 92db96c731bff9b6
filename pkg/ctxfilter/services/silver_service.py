"""
Builds training / inference records for the context filter (CTX) and the
generator (GEN) from selections and assembled contexts.
"""

import json
import logging
from typing import List, Optional

from ctxfilter.errors import ConfigurationError
from ctxfilter.models import (
    ContextAssembly,
    Example,
    Passage,
    PromptTemplates,
    RecordRole,
    Selection,
    SilverRecord,
    SilverRecordMeta,
    TaskKind,
)
from ctxfilter.services.text_service import count_tokens

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATES = PromptTemplates()

# The span sits right before the target, inside an n-gram scorer's window.
CONTEXT_LAST_GEN = "{query_label}: {query}\ncontext: {context}"


def load_templates(path: Optional[str]) -> PromptTemplates:
    """Loads a JSON override; keys that are absent keep their default value."""
    if not path:
        return DEFAULT_TEMPLATES
    with open(path, "r", encoding="utf-8") as f:
        try:
            overrides = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"templates file {path} is not valid JSON: {e}") from e
    if not isinstance(overrides, dict):
        raise ConfigurationError(f"templates file {path} must hold a JSON object")
    merged = DEFAULT_TEMPLATES.model_dump()
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    logger.info(f"[Silver] Loaded prompt templates from {path}")
    return PromptTemplates(**merged)


def format_passage(passage: Passage) -> str:
    if passage.title:
        return f"{passage.title}: {passage.text}"
    return passage.text


def top_k_passages(passages: List[Passage], k: int) -> List[Passage]:
    return [p for p in sorted(passages, key=lambda p: p.rank) if p.rank <= k]


def build_ctx_input(query: str, passages: List[Passage], templates: PromptTemplates = DEFAULT_TEMPLATES) -> str:
    lines = [templates.ctx_question.format(query=query)]
    lines += [templates.ctx_passage.format(passage=format_passage(p)) for p in passages]
    lines.append(templates.ctx_footer)
    return "\n".join(lines)


def build_gen_input(context: str, query: str, task_kind: TaskKind,
                    templates: PromptTemplates = DEFAULT_TEMPLATES) -> str:
    """GEN prompt. With an empty context and no `scoring_gen`, this is the CXMI denominator prompt."""
    return templates.gen.format(
        context=context,
        query=query,
        query_label=templates.query_label(task_kind),
        answer_label=templates.answer_label(task_kind),
    )


def build_scoring_input(context: str, query: str, task_kind: TaskKind,
                        templates: PromptTemplates = DEFAULT_TEMPLATES) -> str:
    """Prefix a CXMI scorer sees: `scoring_gen` when set, else the GEN prompt itself."""
    if templates.scoring_gen is None:
        return build_gen_input(context, query, task_kind, templates)
    return templates.scoring_gen.format(
        context=context,
        query=query,
        query_label=templates.query_label(task_kind),
        answer_label=templates.answer_label(task_kind),
    )


def build_ctx_record(example: Example, passages: List[Passage], selection: Selection, k: int,
                     templates: PromptTemplates = DEFAULT_TEMPLATES) -> SilverRecord:
    """CTX training record: q + top-k passages -> selected span text(s)."""
    top = top_k_passages(passages, k)
    prompt = build_ctx_input(example.query, top, templates)
    return SilverRecord(
        id=example.id,
        role=RecordRole.CTX_TRAIN,
        input=prompt,
        target=selection.text,
        meta=SilverRecordMeta(
            measure=selection.measure_used.value,
            mode="filco",
            input_tokens=count_tokens(prompt),
            context_tokens=count_tokens("\n".join(format_passage(p) for p in top)),
        ),
    )


def build_gen_record(example: Example, context: ContextAssembly, with_target: bool,
                     templates: PromptTemplates = DEFAULT_TEMPLATES,
                     measure: Optional[str] = None) -> SilverRecord:
    """GEN record: context + q -> first canonical output (empty target for inference)."""
    prompt = build_gen_input(context.text, example.query, example.task_kind, templates)
    if measure is None and context.selection is not None:
        measure = context.selection.measure_used.value
    return SilverRecord(
        id=example.id,
        role=RecordRole.GEN_TRAIN if with_target else RecordRole.GEN_INFER,
        input=prompt,
        target=example.outputs[0] if with_target else "",
        meta=SilverRecordMeta(
            measure=measure,
            mode=context.mode.value,
            input_tokens=count_tokens(prompt),
            context_tokens=context.token_count,
        ),
    )

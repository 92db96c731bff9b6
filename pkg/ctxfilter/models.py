from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class TaskKind(str, Enum):
    EXTRACTIVE_QA = "extractive_qa"
    MULTIHOP_QA = "multihop_qa"
    LONGFORM_QA = "longform_qa"
    FACT_VERIFICATION = "fact_verification"
    DIALOG = "dialog"


FEVER_LABELS = ("SUPPORTS", "REFUTES")


class Measure(str, Enum):
    STR_INC = "str_inc"
    LEXICAL = "lexical"
    CXMI = "cxmi"
    # resolved per example from the task kind
    AUTO = "auto"


class Granularity(str, Enum):
    SENTENCE = "sentence"
    PASSAGE = "passage"
    FULL = "full"


class ContextMode(str, Enum):
    FULL = "full"
    PSG = "psg"
    FILCO = "filco"


class Fallback(str, Enum):
    EMPTY = "empty"
    TOP_SENTENCE = "top_sentence"
    FULL_PASSAGE = "full_passage"


class Scale(str, Enum):
    BINARY = "binary"
    UNIT_INTERVAL = "unit_interval"
    RATIO = "ratio"


class RecordRole(str, Enum):
    CTX_TRAIN = "ctx_train"
    GEN_TRAIN = "gen_train"
    GEN_INFER = "gen_infer"


GRANULARITY_MODES = {
    Granularity.SENTENCE: ContextMode.FILCO,
    Granularity.PASSAGE: ContextMode.PSG,
    Granularity.FULL: ContextMode.FULL,
}

DEFAULT_THRESHOLDS = {
    Measure.STR_INC: 0.5,
    Measure.LEXICAL: 0.5,
    Measure.CXMI: 1.0,
}


# --- Dataset Models ---

class Example(BaseModel):
    """A task instance: query, annotated outputs and the task kind."""

    model_config = ConfigDict(extra="allow", populate_by_name=True)

    id: str
    query: str = Field(..., description="Question, claim or dialog history")
    outputs: List[str] = Field(..., description="Reference outputs; multiple answers allowed")
    task_kind: TaskKind = Field(..., alias="task")
    provenance: Optional[List[str]] = Field(None, description="Ids of the articles that support the outputs")

    @field_validator("outputs")
    @classmethod
    def _outputs_non_empty(cls, outputs: List[str]) -> List[str]:
        if not outputs:
            raise ValueError("outputs must contain at least one answer")
        if any(not o.strip() for o in outputs):
            raise ValueError("outputs must not contain empty strings")
        return outputs

    @model_validator(mode="after")
    def _fever_labels(self) -> "Example":
        if self.task_kind == TaskKind.FACT_VERIFICATION:
            bad = [o for o in self.outputs if o not in FEVER_LABELS]
            if bad:
                raise ValueError(f"fact_verification outputs must be SUPPORTS/REFUTES, got {bad}")
        return self

    def to_record(self) -> Dict[str, Any]:
        data = {
            "id": self.id,
            "query": self.query,
            "outputs": list(self.outputs),
            "task": self.task_kind.value,
        }
        if self.provenance is not None:
            data["provenance"] = list(self.provenance)
        data.update(self.model_extra or {})
        return data


class Passage(BaseModel):
    """A ranked retrieved text unit; rank 1 is the top hit."""

    model_config = ConfigDict(extra="allow", populate_by_name=True)

    rank: int = Field(..., ge=1)
    title: str = ""
    text: str
    retrieval_score: Optional[float] = Field(None, alias="score", description="Informational only")
    provenance: Optional[str] = Field(None, description="Source article id")

    @field_validator("text")
    @classmethod
    def _text_non_empty(cls, text: str) -> str:
        if not text.strip():
            raise ValueError("passage text must be non-empty")
        return text

    def to_record(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"rank": self.rank, "title": self.title, "text": self.text}
        if self.retrieval_score is not None:
            data["score"] = self.retrieval_score
        if self.provenance is not None:
            data["provenance"] = self.provenance
        data.update(self.model_extra or {})
        return data


class Span(BaseModel):
    passage_rank: int = Field(..., ge=1)
    sentence_index: int = Field(..., ge=0)
    text: str
    char_start: int = Field(..., ge=0)
    char_end: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _offsets_match(self) -> "Span":
        if self.char_end - self.char_start != len(self.text):
            raise ValueError("span offsets do not match span text length")
        return self

    @property
    def key(self):
        return (self.passage_rank, self.sentence_index)


# --- Filtering Models ---

class FilterConfig(BaseModel):
    measure: Measure = Measure.STR_INC
    threshold: Optional[float] = Field(None, description="Inclusion threshold; None means the measure default")
    granularity: Granularity = Granularity.SENTENCE
    top_k: int = Field(1, ge=1)
    fallback: Fallback = Fallback.EMPTY
    max_spans: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _threshold_range(self) -> "FilterConfig":
        if self.threshold is None:
            return self
        if self.measure == Measure.LEXICAL and not 0.0 <= self.threshold <= 1.0:
            raise ValueError("lexical threshold must lie in [0, 1]")
        if self.measure == Measure.CXMI and self.threshold <= 0.0:
            raise ValueError("cxmi threshold is a ratio and must be > 0")
        return self

    @property
    def effective_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return DEFAULT_THRESHOLDS.get(self.measure, 0.5)

    @property
    def mode(self) -> ContextMode:
        return GRANULARITY_MODES[self.granularity]

    def resolved(self, measure: Measure) -> "FilterConfig":
        """Copy with a concrete measure; re-validates the threshold range."""
        return FilterConfig(**{**self.model_dump(), "measure": measure})


class MeasureScore(BaseModel):
    value: float
    scale: Scale

    @model_validator(mode="after")
    def _bounds(self) -> "MeasureScore":
        if self.scale == Scale.BINARY and self.value not in (0.0, 1.0):
            raise ValueError("binary score must be 0 or 1")
        if self.scale == Scale.UNIT_INTERVAL and not 0.0 <= self.value <= 1.0:
            raise ValueError("unit-interval score out of [0, 1]")
        if self.scale == Scale.RATIO and self.value < 0.0:
            raise ValueError("ratio score must be >= 0")
        return self


class Selection(BaseModel):
    spans: List[Span] = Field(default_factory=list)
    scores: List[float] = Field(default_factory=list)
    measure_used: Measure
    fallback_applied: bool = False

    @model_validator(mode="after")
    def _aligned(self) -> "Selection":
        if len(self.spans) != len(self.scores):
            raise ValueError("scores must align with spans")
        keys = [s.key for s in self.spans]
        if keys != sorted(keys):
            raise ValueError("spans must be in (passage_rank, sentence_index) order")
        return self

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.spans)


class ContextAssembly(BaseModel):
    mode: ContextMode
    text: str
    selection: Optional[Selection] = None
    passages: List[Passage] = Field(default_factory=list)
    token_count: int = Field(..., ge=0)


class FilteredExample(BaseModel):
    """One line of `filter` output: what was selected and the assembled context."""

    id: str
    mode: ContextMode
    measure: Optional[Measure] = None
    spans: List[Span] = Field(default_factory=list)
    scores: List[float] = Field(default_factory=list)
    kept_ranks: List[int] = Field(default_factory=list)
    fallback_applied: bool = False
    context: str
    context_tokens: int


# --- Silver Record Models ---

class SilverRecordMeta(BaseModel):
    model_config = ConfigDict(extra="allow")

    measure: Optional[str] = None
    mode: str
    input_tokens: int
    context_tokens: int


class SilverRecord(BaseModel):
    model_config = ConfigDict(extra="allow")

    id: str
    role: RecordRole
    input: str
    target: str = ""
    meta: SilverRecordMeta


class PromptTemplates(BaseModel):
    """Prompt layouts for filter (CTX) and generator (GEN) records."""

    ctx_question: str = "question: {query}"
    ctx_passage: str = "context: {passage}"
    ctx_footer: str = "filtered:"
    gen: str = "context: {context}\n{query_label}: {query}\n{answer_label}:"
    scoring_gen: Optional[str] = Field(
        None, description="GEN layout for CXMI prompts; None scores with `gen`",
    )
    query_labels: Dict[str, str] = Field(default_factory=lambda: {
        "default": "question",
        TaskKind.DIALOG.value: "dialog history",
        TaskKind.FACT_VERIFICATION.value: "claim",
    })
    answer_labels: Dict[str, str] = Field(default_factory=lambda: {
        "default": "answer",
        TaskKind.FACT_VERIFICATION.value: "judgment",
    })

    def query_label(self, task_kind: TaskKind) -> str:
        return self.query_labels.get(task_kind.value, self.query_labels.get("default", "question"))

    def answer_label(self, task_kind: TaskKind) -> str:
        return self.answer_labels.get(task_kind.value, self.answer_labels.get("default", "answer"))


# --- Evaluation Models ---

class EvalSummary(BaseModel):
    metric: str
    scores: List[float] = Field(default_factory=list, description="Per-example scores in [0, 1]")
    mean: float = Field(..., description="Mean x100")
    support: int
    positive_mean: Optional[float] = None
    positive_support: Optional[int] = None
    negative_mean: Optional[float] = None
    negative_support: Optional[int] = None


class LengthRow(BaseModel):
    mode: str
    support: int
    mean_input_tokens: float
    mean_context_tokens: float
    input_reduction: Optional[float] = Field(None, description="100 * (1 - mode/full) on input tokens")
    context_reduction: Optional[float] = Field(None, description="100 * (1 - mode/full) on context tokens")


# --- Manifest Models ---

class RunManifest(BaseModel):
    tool_version: str
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    input_path: Optional[str] = None
    input_fingerprint: Optional[str] = Field(None, description="sha256 of the input file")
    outputs: Dict[str, str] = Field(default_factory=dict, description="output file name -> sha256")
    started_at: str
    finished_at: Optional[str] = None

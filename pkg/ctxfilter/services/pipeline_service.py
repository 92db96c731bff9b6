import hashlib
import json
import logging
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple, TypeVar

from ctxfilter import __version__
from ctxfilter.errors import DataError
from ctxfilter.models import (
    ContextAssembly,
    ContextMode,
    Example,
    FilterConfig,
    FilteredExample,
    Granularity,
    Measure,
    Passage,
    PromptTemplates,
    RunManifest,
    SilverRecord,
)
from ctxfilter.services.dataset_io import DatasetItem, dump_line, iter_examples, read_examples
from ctxfilter.services.evaluation_service import (
    ANSWER_STRING,
    context_precision,
    length_report,
    retrieval_precision,
    retrieval_recall,
)
from ctxfilter.services.scorers import SequenceScorer
from ctxfilter.services.selection_service import (
    assemble_context,
    resolve_config,
    select_passages_psg,
    select_silver,
)
from ctxfilter.services.silver_service import DEFAULT_TEMPLATES, build_ctx_record, build_gen_record
from ctxfilter.services.text_service import count_tokens

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

MANIFEST_NAME = "manifest.json"
COMPARED_MEASURES = (Measure.STR_INC, Measure.LEXICAL, Measure.CXMI)


def ordered_map(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> Iterator[R]:
    """
    Maps fn over items with up to `jobs` workers, yielding results in input order.
    At most jobs * 4 items are in flight, so memory stays flat on long streams.
    """
    if jobs <= 1:
        for item in items:
            yield fn(item)
        return
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        window = deque()
        for item in items:
            window.append(pool.submit(fn, item))
            if len(window) >= jobs * 4:
                yield window.popleft().result()
        while window:
            yield window.popleft().result()


def file_fingerprint(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


class PipelineService:
    """Runs filtering and silver-data generation over a dataset file, one example at a time."""

    def __init__(self, config: FilterConfig, scorer: Optional[SequenceScorer] = None,
                 templates: PromptTemplates = DEFAULT_TEMPLATES, jobs: int = 1):
        self.config = config
        self.scorer = scorer
        self.templates = templates
        self.jobs = max(1, jobs)

    # --- per-example steps ---

    def filter_example(self, example: Example, passages: List[Passage]) -> Tuple[ContextAssembly, FilteredExample]:
        config = self.config
        mode = config.mode
        if config.granularity == Granularity.FULL:
            context = assemble_context(ContextMode.FULL, passages, k=config.top_k)
            result = FilteredExample(id=example.id, mode=mode, kept_ranks=[p.rank for p in context.passages],
                                     context=context.text, context_tokens=context.token_count)
            return context, result

        if config.granularity == Granularity.PASSAGE:
            kept = select_passages_psg(example, passages, config, self.scorer, self.templates)
            context = assemble_context(ContextMode.PSG, kept)
            measure = resolve_config(example, config, self.scorer).measure
            result = FilteredExample(id=example.id, mode=mode, measure=measure, kept_ranks=[p.rank for p in kept],
                                     context=context.text, context_tokens=context.token_count)
            return context, result

        selection = select_silver(example, passages, config, self.scorer, self.templates)
        context = assemble_context(ContextMode.FILCO, passages, selection, k=config.top_k)
        result = FilteredExample(
            id=example.id,
            mode=mode,
            measure=selection.measure_used,
            spans=selection.spans,
            scores=selection.scores,
            kept_ranks=sorted({s.passage_rank for s in selection.spans}),
            fallback_applied=selection.fallback_applied,
            context=context.text,
            context_tokens=context.token_count,
        )
        return context, result

    def silver_example(self, example: Example, passages: List[Passage],
                       predicted_context: Optional[str] = None) -> Tuple[FilteredExample, List[SilverRecord]]:
        """ctx_train (sentence granularity only), gen_train and gen_infer records for one example."""
        context, result = self.filter_example(example, passages)
        measure = result.measure.value if result.measure else None
        records = []
        if context.selection is not None:
            records.append(build_ctx_record(example, passages, context.selection, self.config.top_k, self.templates))
        records.append(build_gen_record(example, context, with_target=True, templates=self.templates, measure=measure))

        infer_context = context
        if predicted_context is not None:
            infer_context = ContextAssembly(mode=context.mode, text=predicted_context,
                                            token_count=count_tokens(predicted_context))
        records.append(build_gen_record(example, infer_context, with_target=False, templates=self.templates,
                                        measure=measure))
        return result, records

    # --- file-level runs ---

    def _manifest(self, command: str, input_path: str, extra_config: Optional[Dict[str, Any]] = None) -> RunManifest:
        config = self.config.model_dump(mode="json")
        config["jobs"] = self.jobs
        config.update(extra_config or {})
        return RunManifest(
            tool_version=__version__,
            command=command,
            config=config,
            input_path=os.path.abspath(input_path),
            input_fingerprint=file_fingerprint(input_path),
            started_at=_now(),
        )

    @staticmethod
    def _finish(manifest: RunManifest, output_dir: str, files: List[str]) -> RunManifest:
        for name in files:
            manifest.outputs[name] = file_fingerprint(os.path.join(output_dir, name))
        manifest.finished_at = _now()
        save_manifest(manifest, output_dir)
        return manifest

    def run_filter(self, input_path: str, output_dir: str,
                   extra_config: Optional[Dict[str, Any]] = None) -> RunManifest:
        manifest = self._manifest("filter", input_path, extra_config)
        out_name = "filtered.jsonl"

        count = 0
        with open(input_path, "r", encoding="utf-8") as src, staged_outputs(output_dir, [out_name]) as sinks:
            for result in ordered_map(lambda item: self.filter_example(*item)[1], iter_examples(src), self.jobs):
                sinks[out_name].write(dump_line(result.model_dump(mode="json")) + "\n")
                count += 1
        logger.info(f"[Pipeline] Filtered {count} example(s) -> {os.path.join(output_dir, out_name)}")
        return self._finish(manifest, output_dir, [out_name])

    def run_silver(self, input_path: str, output_dir: str, predicted_contexts: Optional[Dict[str, str]] = None,
                   extra_config: Optional[Dict[str, Any]] = None,
                   observe: Optional[Callable[[Example, FilteredExample], None]] = None) -> RunManifest:
        """Writes ctx_train / gen_train / gen_infer. `observe` sees every filtered example, in input order."""
        manifest = self._manifest("silver", input_path, extra_config)
        names = {"ctx_train": "ctx_train.jsonl", "gen_train": "gen_train.jsonl", "gen_infer": "gen_infer.jsonl"}

        if predicted_contexts is not None:
            with open(input_path, "r", encoding="utf-8") as src:
                missing = [e.id for e, _ in iter_examples(src) if e.id not in predicted_contexts]
            if missing:
                raise DataError(f"no predicted context for {len(missing)} example(s): {', '.join(missing[:20])}")

        def _work(item: DatasetItem) -> Tuple[Example, FilteredExample, List[SilverRecord]]:
            example, passages = item
            predicted = predicted_contexts.get(example.id) if predicted_contexts is not None else None
            return (example, *self.silver_example(example, passages, predicted))

        count = 0
        with open(input_path, "r", encoding="utf-8") as src, \
                staged_outputs(output_dir, list(names.values())) as sinks:
            for example, result, records in ordered_map(_work, iter_examples(src), self.jobs):
                for record in records:
                    sinks[names[record.role.value]].write(dump_line(record.model_dump(mode="json")) + "\n")
                if observe is not None:
                    observe(example, result)
                count += 1
        logger.info(f"[Pipeline] Built silver records for {count} example(s) in {output_dir}")
        return self._finish(manifest, output_dir, list(names.values()))

    def run_compare(self, input_path: str, output_dir: str, thresholds: Optional[Dict[Measure, float]] = None,
                    extra_config: Optional[Dict[str, Any]] = None) -> Tuple[List[Dict[str, Any]], RunManifest]:
        """Silver datasets and side-by-side stats for every measure (sentence granularity)."""
        with open(input_path, "r", encoding="utf-8") as src:
            if next(iter_examples(src), None) is None:
                raise DataError("nothing to compare: the dataset is empty")

        manifest = self._manifest("compare", input_path, extra_config)
        rows: List[Dict[str, Any]] = []
        files: List[str] = []

        with staged_outputs(output_dir, ["compare.json"]) as sinks:
            for measure in COMPARED_MEASURES:
                threshold = (thresholds or {}).get(measure, self.config.threshold)
                config = FilterConfig(**{**self.config.model_dump(), "measure": measure, "threshold": threshold,
                                         "granularity": Granularity.SENTENCE})
                service = PipelineService(config, self.scorer, self.templates, self.jobs)
                logger.info(f"[Pipeline] Comparing measure {measure.value} "
                            f"(threshold {config.effective_threshold})...")

                tally = {"total": 0, "selected": 0, "tokens": 0, "precision": 0.0}

                def _observe(example: Example, result: FilteredExample) -> None:
                    tally["total"] += 1
                    if result.spans and not result.fallback_applied:
                        tally["selected"] += 1
                    tally["tokens"] += result.context_tokens
                    tally["precision"] += context_precision(example.outputs, result.context)

                service.run_silver(input_path, os.path.join(output_dir, measure.value),
                                   extra_config=extra_config, observe=_observe)
                files += [os.path.join(measure.value, name) for name in ("ctx_train.jsonl", "gen_train.jsonl")]

                total = tally["total"]
                if total == 0:
                    raise DataError("nothing to compare: the dataset is empty")
                rows.append({
                    "measure": measure.value,
                    "examples": total,
                    "selection_rate": 100.0 * tally["selected"] / total,
                    "mean_context_tokens": tally["tokens"] / total,
                    "context_precision": 100.0 * tally["precision"] / total,
                })
            sinks["compare.json"].write(json.dumps(rows, indent=2, sort_keys=True) + "\n")

        files.append("compare.json")
        return rows, self._finish(manifest, output_dir, files)

    def dataset_stats(self, input_path: str, recall_ks: Tuple[int, ...] = (1, 5),
                      recall_mode: str = ANSWER_STRING) -> Dict[str, Any]:
        """Retrieval recall/precision at each k, plus lengths and precision for full / psg / filco contexts."""
        with open(input_path, "r", encoding="utf-8") as src:
            dataset = read_examples(src)
        if not dataset:
            raise DataError("no statistics for an empty dataset")

        retrieval = [{"k": k,
                      "recall": retrieval_recall(dataset, k, recall_mode),
                      "precision": retrieval_precision(dataset, k, recall_mode)} for k in recall_ks]

        by_mode: Dict[str, List[SilverRecord]] = {}
        precision: Dict[str, List[float]] = {}
        for granularity in (Granularity.FULL, Granularity.PASSAGE, Granularity.SENTENCE):
            service = PipelineService(self.config.model_copy(update={"granularity": granularity}),
                                      self.scorer, self.templates, self.jobs)
            mode = service.config.mode.value
            by_mode[mode], precision[mode] = [], []
            pairs = ordered_map(lambda item: (item[0], service.filter_example(*item)[0]), dataset, self.jobs)
            for example, context in pairs:
                by_mode[mode].append(build_gen_record(example, context, with_target=True, templates=self.templates))
                precision[mode].append(context_precision(example.outputs, context.text))

        lengths = []
        for row in length_report(by_mode):
            data = row.model_dump()
            values = precision[row.mode]
            data["context_precision"] = 100.0 * sum(values) / len(values)
            lengths.append(data)
        return {"examples": len(dataset), "retrieval": retrieval, "lengths": lengths}


def save_manifest(manifest: RunManifest, output_dir: str) -> str:
    path = os.path.join(output_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as f:
        f.write(manifest.model_dump_json(indent=2))
    return path


def load_manifest(output_dir: str) -> RunManifest:
    with open(os.path.join(output_dir, MANIFEST_NAME), "r", encoding="utf-8") as f:
        return RunManifest.model_validate_json(f.read())


@contextmanager
def staged_outputs(output_dir: str, names: Sequence[str]) -> Iterator[Dict[str, TextIO]]:
    """
    Opens a `<name>.tmp` sink per output file and moves them over the real names
    only when the block finishes. Any manifest already in output_dir is removed
    first; on failure the temporaries are deleted and the old outputs stay as they were.
    """
    os.makedirs(output_dir, exist_ok=True)
    stale = os.path.join(output_dir, MANIFEST_NAME)
    if os.path.exists(stale):
        os.remove(stale)

    staged = {name: os.path.join(output_dir, name + ".tmp") for name in names}
    sinks: Dict[str, TextIO] = {}
    try:
        for name, path in staged.items():
            sinks[name] = open(path, "w", encoding="utf-8", newline="\n")
        yield sinks
    except BaseException:
        for sink in sinks.values():
            sink.close()
        for path in staged.values():
            if os.path.exists(path):
                os.remove(path)
        raise

    for sink in sinks.values():
        sink.close()
    for name, path in staged.items():
        os.replace(path, os.path.join(output_dir, name))

import argparse
import logging
import os
import sys
from typing import Dict, Iterator, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from ctxfilter.errors import (
    ConfigurationError,
    DataError,
    ProtocolError,
    RemoteScorerError,
    ScorerError,
)
from ctxfilter.models import ContextMode, Fallback, FilterConfig, Granularity, Measure, PromptTemplates
from ctxfilter.services.dataset_io import iter_examples, read_examples, read_id_map
from ctxfilter.services.evaluation_service import (
    ANSWER_STRING,
    DEFAULT_METRICS,
    METRICS,
    PROVENANCE,
    context_precision,
    evaluate,
    format_table,
    render,
    summary_rows,
)
from ctxfilter.services.pipeline_service import PipelineService
from ctxfilter.services.scorers import SequenceScorer, build_scorer
from ctxfilter.services.silver_service import CONTEXT_LAST_GEN, load_templates

logger = logging.getLogger("ctxfilter")

JOBS_ENV = "FILCO_JOBS"

MODE_GRANULARITY = {
    ContextMode.FILCO.value: Granularity.SENTENCE,
    ContextMode.PSG.value: Granularity.PASSAGE,
    ContextMode.FULL.value: Granularity.FULL,
}


def _shared_flags() -> argparse.ArgumentParser:
    """Flags every subcommand accepts."""
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--input", required=True, help="Dataset JSONL (one example with its passages per line)")
    shared.add_argument("--output", help="Output directory (filter / silver / compare)")
    shared.add_argument("--k", type=int, default=1, help="Number of top-ranked passages to use")
    shared.add_argument("--measure", choices=[m.value for m in Measure], default=Measure.STR_INC.value)
    shared.add_argument("--threshold", type=float, default=None,
                        help="Inclusion threshold (default: 0.5 for lexical, 1.0 for cxmi)")
    shared.add_argument("--fallback", choices=[f.value for f in Fallback], default=Fallback.EMPTY.value)
    shared.add_argument("--mode", choices=list(MODE_GRANULARITY), default=ContextMode.FILCO.value,
                        help="full: all top-k passages, psg: kept passages, filco: kept sentences")
    shared.add_argument("--max-spans", type=int, default=1, help="Spans kept per example in filco mode")
    shared.add_argument("--scorer", choices=["ngram", "remote"], default=None,
                        help="Sequence scorer for cxmi")
    shared.add_argument("--scorer-url", default=None, help="Scoring endpoint (or FILCO_SCORER_URL)")
    shared.add_argument("--ngram-order", type=int, default=2)
    shared.add_argument("--ngram-alpha", type=float, default=1.0)
    shared.add_argument("--templates", default=None, help="JSON file overriding prompt templates")
    shared.add_argument("--format", choices=["table", "json"], default="table")
    shared.add_argument("--jobs", type=int, default=None, help="Worker threads (or FILCO_JOBS; default 1)")
    shared.add_argument("--verbose", action="store_true", help="Debug logging")
    return shared


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_flags()
    parser = argparse.ArgumentParser(prog="ctxfilter",
                                     description="Context filtering for retrieval-augmented generation")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("filter", parents=[shared], help="Select spans and write filtered contexts")

    silver = sub.add_parser("silver", parents=[shared], help="Build ctx_train / gen_train / gen_infer records")
    silver.add_argument("--predicted-contexts", default=None,
                        help='JSONL of {"id", "context"} used for gen_infer records')

    ev = sub.add_parser("eval", parents=[shared], help="Score predictions against the dataset")
    ev.add_argument("--predictions", required=True, help='JSONL of {"id", "prediction"}')
    ev.add_argument("--metric", choices=sorted(METRICS), default=None,
                    help="Default follows the task of the first example")
    ev.add_argument("--split-by-positive", action="store_true",
                    help="Also report means on positive / negative top-1 passages")
    ev.add_argument("--contexts", default=None, help='JSONL of {"id", "context"}; reports context precision')

    stats = sub.add_parser("stats", parents=[shared], help="Retrieval recall / precision and length report")
    stats.add_argument("--recall-k", type=int, action="append", default=None,
                       help="k for recall / precision (repeatable; default 1 and 5)")
    stats.add_argument("--positive", choices=[ANSWER_STRING, PROVENANCE], default=ANSWER_STRING)

    compare = sub.add_parser("compare", parents=[shared], help="Silver data and stats for every measure")
    compare.add_argument("--lexical-threshold", type=float, default=None)
    compare.add_argument("--cxmi-threshold", type=float, default=None)
    return parser


def _jobs(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.jobs is not None:
        jobs = args.jobs
    else:
        raw = os.getenv(JOBS_ENV, "1")
        try:
            jobs = int(raw)
        except ValueError:
            parser.error(f"{JOBS_ENV} must be an integer, got {raw!r}")
    if jobs < 1:
        parser.error("--jobs must be >= 1")
    return jobs


def _check_flags(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if args.k < 1:
        parser.error("--k must be >= 1")
    if args.max_spans < 1:
        parser.error("--max-spans must be >= 1")
    if args.command in ("filter", "silver", "compare") and not args.output:
        parser.error(f"{args.command} needs --output")
    needs_scorer = args.measure == Measure.CXMI.value or args.command == "compare"
    if needs_scorer and args.scorer is None:
        parser.error("cxmi scoring needs --scorer {ngram,remote}")


def _filter_config(args: argparse.Namespace) -> FilterConfig:
    return FilterConfig(
        measure=Measure(args.measure),
        threshold=args.threshold,
        granularity=MODE_GRANULARITY[args.mode],
        top_k=args.k,
        fallback=Fallback(args.fallback),
        max_spans=args.max_spans,
    )


def _ngram_corpus(path: str) -> Iterator[str]:
    """Queries, outputs and passage texts of the dataset, for training the n-gram scorer."""
    with open(path, "r", encoding="utf-8") as src:
        for example, passages in iter_examples(src):
            yield example.query
            yield from example.outputs
            for passage in passages:
                yield passage.text


def _scorer(args: argparse.Namespace, jobs: int) -> Optional[SequenceScorer]:
    if args.scorer == "ngram":
        logger.info(f"[CLI] Training {args.ngram_order}-gram scorer on {args.input}...")
        corpus = list(_ngram_corpus(args.input))
        if not corpus:
            raise DataError("the dataset is empty; nothing to train the n-gram scorer on")
        try:
            return build_scorer("ngram", corpus=corpus, order=args.ngram_order, alpha=args.ngram_alpha)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
    if args.scorer == "remote":
        return build_scorer("remote", url=args.scorer_url, max_in_flight=max(8, jobs))
    return None


def _scoring_templates(args: argparse.Namespace, templates: PromptTemplates) -> PromptTemplates:
    """An n-gram scorer only sees the last n-1 tokens, so it scores with the span right before the target."""
    if args.scorer != "ngram" or templates.scoring_gen is not None:
        return templates
    logger.debug("[CLI] n-gram scorer: CXMI prompts put the context last")
    return templates.model_copy(update={"scoring_gen": CONTEXT_LAST_GEN})


def _read_id_map_file(path: str, field: str) -> Dict[str, str]:
    with open(path, "r", encoding="utf-8") as f:
        return read_id_map(f, field)


# --- Commands ---

def cmd_filter(args: argparse.Namespace, service: PipelineService) -> int:
    service.run_filter(args.input, args.output, extra_config={"k": args.k})
    return 0


def cmd_silver(args: argparse.Namespace, service: PipelineService) -> int:
    predicted = None
    if args.predicted_contexts:
        predicted = _read_id_map_file(args.predicted_contexts, "context")
    service.run_silver(args.input, args.output, predicted_contexts=predicted,
                       extra_config={"predicted_contexts": args.predicted_contexts})
    return 0


def cmd_eval(args: argparse.Namespace, service: PipelineService) -> int:
    with open(args.input, "r", encoding="utf-8") as src:
        dataset = read_examples(src)
    if not dataset:
        raise DataError("nothing to evaluate: the dataset is empty")
    predictions = _read_id_map_file(args.predictions, "prediction")
    metric = args.metric or DEFAULT_METRICS[dataset[0][0].task_kind]

    summary = evaluate(predictions, dataset, metric, args.split_by_positive)
    payload = summary.model_dump(exclude={"scores"})
    rows = summary_rows(summary)

    if args.contexts:
        contexts = _read_id_map_file(args.contexts, "context")
        missing = [example.id for example, _ in dataset if example.id not in contexts]
        if missing:
            raise DataError(f"missing contexts for {len(missing)} example(s): {', '.join(missing[:20])}")
        values = [context_precision(example.outputs, contexts[example.id]) for example, _ in dataset]
        payload["context_precision"] = 100.0 * sum(values) / len(values)

    output = render(payload, ["split", "support", metric], rows, args.format)
    if args.format == "table" and "context_precision" in payload:
        output += f"\n\ncontext precision: {payload['context_precision']:.2f}"
    print(output)
    return 0


def cmd_stats(args: argparse.Namespace, service: PipelineService) -> int:
    ks = tuple(args.recall_k) if args.recall_k else (1, 5)
    if any(k < 1 for k in ks):
        raise ConfigurationError("--recall-k values must be >= 1")
    stats = service.dataset_stats(args.input, recall_ks=ks, recall_mode=args.positive)
    if args.format == "json":
        print(render(stats, [], [], "json"))
        return 0

    retrieval = format_table(["k", "recall", "precision"],
                             [[r["k"], r["recall"], r["precision"]] for r in stats["retrieval"]])
    length_headers = ["mode", "support", "input_tokens", "context_tokens", "input_reduction",
                      "context_reduction", "context_precision"]
    lengths = format_table(length_headers, [[
        r["mode"], r["support"], r["mean_input_tokens"], r["mean_context_tokens"],
        r["input_reduction"], r["context_reduction"], r["context_precision"],
    ] for r in stats["lengths"]])
    print(f"examples: {stats['examples']}\n\n{retrieval}\n\n{lengths}")
    return 0


def cmd_compare(args: argparse.Namespace, service: PipelineService) -> int:
    thresholds = {}
    if args.lexical_threshold is not None:
        thresholds[Measure.LEXICAL] = args.lexical_threshold
    if args.cxmi_threshold is not None:
        thresholds[Measure.CXMI] = args.cxmi_threshold

    rows, _ = service.run_compare(args.input, args.output, thresholds=thresholds, extra_config={"k": args.k})
    headers = ["measure", "examples", "selection_rate", "mean_context_tokens", "context_precision"]
    print(render(rows, headers, [[row[h] for h in headers] for row in rows], args.format))
    return 0


COMMANDS = {
    "filter": cmd_filter,
    "silver": cmd_silver,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "compare": cmd_compare,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_flags(args, parser)
        jobs = _jobs(args, parser)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )

    scorer = None
    try:
        config = _filter_config(args)
        templates = _scoring_templates(args, load_templates(args.templates))
        scorer = _scorer(args, jobs)
        service = PipelineService(config, scorer, templates, jobs)
        return COMMANDS[args.command](args, service)
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"[CLI] Configuration error: {e}")
        return 2
    except (DataError, OSError) as e:
        logger.error(f"[CLI] {e}")
        return 1
    except (ScorerError, RemoteScorerError, ProtocolError) as e:
        logger.error(f"[CLI] Scoring failed: {e}")
        return 1
    finally:
        if hasattr(scorer, "close"):
            scorer.close()


if __name__ == "__main__":
    sys.exit(main())

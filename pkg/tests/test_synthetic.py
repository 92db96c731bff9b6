import pytest

from ctxfilter.models import FilterConfig, Granularity, Measure
from ctxfilter.scripts.make_synthetic_corpus import decoy_year_corpus, equal_length_corpus, first_year_extractor
from ctxfilter.services.dataset_io import write_examples
from ctxfilter.services.evaluation_service import context_precision, exact_match
from ctxfilter.services.pipeline_service import PipelineService


@pytest.fixture(scope="module")
def decoy():
    return decoy_year_corpus(n=500, seed=0)


def _service(granularity):
    return PipelineService(FilterConfig(measure=Measure.STR_INC, granularity=granularity, top_k=1))


def test_extractor():
    assert first_year_extractor("In 1850 and 1900.") == "1850"
    assert first_year_extractor("no years, only 12345 and 42") == ""


def test_filtered_contexts_beat_full_contexts(decoy):
    filco, full = _service(Granularity.SENTENCE), _service(Granularity.FULL)
    hits = {"filco": 0, "full": 0}
    for example, passages in decoy:
        for name, service in (("filco", filco), ("full", full)):
            context, _ = service.filter_example(example, passages)
            hits[name] += exact_match(first_year_extractor(context.text), example.outputs)
    em = {name: 100.0 * count / len(decoy) for name, count in hits.items()}
    assert em["filco"] >= 95.0
    assert em["full"] <= 40.0
    assert em["filco"] - em["full"] >= 55.0


def test_filtered_precision_is_never_lower(decoy):
    filco, full = _service(Granularity.SENTENCE), _service(Granularity.FULL)
    for example, passages in decoy:
        filtered, result = filco.filter_example(example, passages)
        if not result.spans:
            continue
        unfiltered, _ = full.filter_example(example, passages)
        assert context_precision(example.outputs, filtered.text) >= context_precision(example.outputs, unfiltered.text)


def test_single_span_filtering_cuts_context_by_four_fifths(tmp_path):
    path = tmp_path / "equal.jsonl"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        write_examples(equal_length_corpus(n=50, seed=3), f)
    stats = _service(Granularity.SENTENCE).dataset_stats(str(path))
    rows = {row["mode"]: row for row in stats["lengths"]}
    assert rows["filco"]["context_reduction"] == pytest.approx(80.0, abs=2.0)
    assert rows["full"]["context_reduction"] == 0.0

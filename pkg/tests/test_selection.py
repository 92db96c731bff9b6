import math
import random
from fractions import Fraction

import pytest

from ctxfilter.errors import ConfigurationError
from ctxfilter.models import ContextMode, Fallback, FilterConfig, Measure, PromptTemplates, Selection, TaskKind
from ctxfilter.services.ngram_scorer import ngram_train
from ctxfilter.services.selection_service import (
    assemble_context,
    enumerate_spans,
    select_passages_psg,
    select_silver,
)
from ctxfilter.services.silver_service import build_gen_input
from ctxfilter.services.text_service import tokenize
from tests.conftest import make_example, make_passages

CONTEXT_LAST = PromptTemplates(gen="{query} {context}")
WORDS = ["alpha", "beta", "gamma", "delta", "omega", "kappa", "sigma", "theta"]


def test_enumerate_spans_in_rank_order():
    passages = make_passages("One a. Two b. Three c.", "Four d. Five e. Six f.")
    spans = enumerate_spans(passages, 2)
    assert [s.key for s in spans] == [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]
    assert [s.text for s in spans][3] == "Four d."
    assert all(passages[s.passage_rank - 1].text[s.char_start:s.char_end] == s.text for s in spans)
    assert [s.passage_rank for s in enumerate_spans(passages, 1)] == [1, 1, 1]
    assert len(enumerate_spans(make_passages("no boundary here"), 1)) == 1


def test_str_inc_takes_first_hit():
    example = make_example(outputs=["1997"])
    passages = make_passages("It opened in 1997. It closed in 1997.")
    selection = select_silver(example, passages, FilterConfig(measure=Measure.STR_INC))
    assert [s.text for s in selection.spans] == ["It opened in 1997."]
    assert not selection.fallback_applied


def test_lexical_below_threshold_falls_back_to_empty():
    # F1 against "a b c d e": 0.2 and 0.4
    example = make_example(outputs=["a b c d e"])
    passages = make_passages("A x y z w. A b x y z.")
    selection = select_silver(example, passages, FilterConfig(measure=Measure.LEXICAL, threshold=0.5))
    assert selection.spans == []
    assert selection.fallback_applied
    context = assemble_context(ContextMode.FILCO, passages, selection)
    assert context.text == ""
    assert context.token_count == 0


def test_fallback_policies():
    example = make_example(outputs=["missing"])
    passages = make_passages("First one. Second one.", "Third one.")
    top = select_silver(example, passages, FilterConfig(fallback=Fallback.TOP_SENTENCE, top_k=2))
    assert [s.key for s in top.spans] == [(1, 0)]
    assert top.fallback_applied
    whole = select_silver(example, passages, FilterConfig(fallback=Fallback.FULL_PASSAGE, top_k=2))
    assert [s.key for s in whole.spans] == [(1, 0), (1, 1)]


def test_lexical_ties_go_to_smallest_rank_and_index():
    example = make_example(outputs=["red fox"])
    passages = make_passages("Red fox. Red fox.", "Red fox.")
    selection = select_silver(example, passages, FilterConfig(measure=Measure.LEXICAL, top_k=2))
    assert [s.key for s in selection.spans] == [(1, 0)]
    assert selection.scores == [1.0]


def test_max_spans_keeps_document_order():
    example = make_example(outputs=["red fox jumps"])
    passages = make_passages("Red cat. Red fox jumps. Red fox.")
    selection = select_silver(example, passages,
                              FilterConfig(measure=Measure.LEXICAL, threshold=0.1, max_spans=2))
    assert [s.key for s in selection.spans] == [(1, 1), (1, 2)]


def test_cxmi_needs_a_scorer():
    example = make_example(outputs=["x"])
    with pytest.raises(ConfigurationError):
        select_silver(example, make_passages("X here."), FilterConfig(measure=Measure.CXMI))


def test_auto_resolves_per_task():
    claim = make_example(query="Cats purr loudly", outputs=["SUPPORTS"], task=TaskKind.FACT_VERIFICATION)
    passages = make_passages("Dogs bark. Cats purr loudly at night.")
    selection = select_silver(claim, passages, FilterConfig(measure=Measure.AUTO))
    assert selection.measure_used == Measure.LEXICAL
    assert [s.key for s in selection.spans] == [(1, 1)]

    multihop = make_example(outputs=["x"], task=TaskKind.MULTIHOP_QA)
    with pytest.raises(ConfigurationError):
        select_silver(multihop, passages, FilterConfig(measure=Measure.AUTO))


def test_psg_keeps_only_containing_passages():
    example = make_example(outputs=["Paris"])
    passages = make_passages("Lyon is large.", "Paris is the capital.")
    kept = select_passages_psg(example, passages, FilterConfig(top_k=2))
    assert [p.rank for p in kept] == [2]
    assert select_passages_psg(make_example(outputs=["Rome"]), passages, FilterConfig(top_k=2)) == []


def test_assemble_full_uses_title_and_text():
    passages = make_passages("First text.", "Second text.", titles=["One", "Two"])
    context = assemble_context(ContextMode.FULL, passages, k=1)
    assert context.text == "One: First text."
    assert context.token_count == 3
    assert assemble_context(ContextMode.FULL, passages, k=2).text == "One: First text.\nTwo: Second text."


def test_selection_is_deterministic():
    example = make_example(outputs=["b c"])
    passages = make_passages("A b c. B c. C b.")
    config = FilterConfig(measure=Measure.LEXICAL, threshold=0.1)
    assert select_silver(example, passages, config) == select_silver(example, passages, config)


def test_higher_threshold_never_adds_spans():
    rng = random.Random(5)
    for _ in range(50):
        example, passages, _ = _instance(rng)
        low = select_silver(example, passages, FilterConfig(measure=Measure.LEXICAL, threshold=0.1, max_spans=50,
                                                            top_k=5))
        high = select_silver(example, passages, FilterConfig(measure=Measure.LEXICAL, threshold=0.4, max_spans=50,
                                                             top_k=5))
        assert {s.key for s in high.spans} <= {s.key for s in low.spans}


# --- brute-force oracle ---

def _sentence(rng):
    words = [rng.choice(WORDS) for _ in range(rng.randrange(1, 6))]
    return " ".join(words).capitalize() + "."


def _instance(rng):
    sentences = [[_sentence(rng) for _ in range(rng.randrange(1, 13))] for _ in range(rng.randrange(1, 6))]
    passages = make_passages(*[" ".join(s) for s in sentences])
    outputs = [" ".join(rng.choice(WORDS) for _ in range(rng.randrange(1, 3))) for _ in range(rng.randrange(1, 3))]
    return make_example(query=rng.choice(WORDS), outputs=outputs), passages, sentences


def _oracle_f1(span_tokens, ref_tokens):
    if not span_tokens or not ref_tokens:
        return Fraction(0)
    remaining = list(ref_tokens)
    overlap = 0
    for token in span_tokens:
        if token in remaining:
            remaining.remove(token)
            overlap += 1
    return Fraction(2 * overlap, len(span_tokens) + len(ref_tokens))


def _oracle(measure, example, candidates, threshold, model):
    """candidates: [(key, text)] in document order. Returns the selected key or None."""
    if measure == Measure.STR_INC:
        for key, text in candidates:
            if any(o.lower() in text.lower() for o in example.outputs):
                return key
        return None

    scored = []
    for key, text in candidates:
        if measure == Measure.LEXICAL:
            value = max(_oracle_f1(tokenize(text), tokenize(o)) for o in example.outputs)
            passes = value > Fraction(str(threshold))
        else:
            value = max(model.score(build_gen_input(text, example.query, example.task_kind, CONTEXT_LAST), o)
                        - model.score(build_gen_input("", example.query, example.task_kind, CONTEXT_LAST), o)
                        for o in example.outputs)
            passes = value > math.log(threshold)
        if passes:
            scored.append((key, value))
    best = None
    for key, value in scored:
        if best is None or value > best[1]:
            best = (key, value)
    return best[0] if best else None


@pytest.mark.parametrize("measure", [Measure.STR_INC, Measure.LEXICAL, Measure.CXMI])
def test_select_silver_matches_brute_force(measure):
    rng = random.Random(2024)
    model = ngram_train([_sentence(rng) for _ in range(200)], n=2, alpha=0.5)
    for _ in range(200):
        example, passages, sentences = _instance(rng)
        k = rng.randrange(1, len(passages) + 1)
        threshold = rng.choice([0.25, 0.4, 0.5]) if measure == Measure.LEXICAL else rng.choice([0.5, 1.0, 1.5])
        config = FilterConfig(measure=measure, threshold=threshold, top_k=k)

        candidates = [((rank, i), text) for rank, group in enumerate(sentences[:k], start=1)
                      for i, text in enumerate(group)]
        assert [(s.key, s.text) for s in enumerate_spans(passages, k)] == candidates

        selection = select_silver(example, passages, config, scorer=model, templates=CONTEXT_LAST)
        expected = _oracle(measure, example, candidates, threshold, model)
        assert [s.key for s in selection.spans] == ([expected] if expected else [])
        assert selection.fallback_applied == (expected is None)


def test_empty_selection_model():
    selection = Selection(measure_used=Measure.STR_INC)
    assert selection.text == ""


def _random_config(rng, passages):
    measure = rng.choice([Measure.STR_INC, Measure.LEXICAL, Measure.CXMI])
    threshold = rng.choice([None, 0.2]) if measure == Measure.LEXICAL else None
    return FilterConfig(measure=measure, threshold=threshold, top_k=rng.randrange(1, len(passages) + 1),
                        fallback=rng.choice(list(Fallback)), max_spans=rng.randrange(1, 4))


def test_filtered_context_never_longer_than_full():
    rng = random.Random(31)
    model = ngram_train([_sentence(rng) for _ in range(100)], n=2, alpha=0.5)
    for _ in range(1000):
        example, passages, _ = _instance(rng)
        config = _random_config(rng, passages)
        selection = select_silver(example, passages, config, scorer=model, templates=CONTEXT_LAST)
        filco = assemble_context(ContextMode.FILCO, passages, selection, k=config.top_k)
        full = assemble_context(ContextMode.FULL, passages, k=config.top_k)
        assert filco.token_count <= full.token_count


def test_selected_spans_come_from_top_k_passages():
    rng = random.Random(32)
    model = ngram_train([_sentence(rng) for _ in range(100)], n=2, alpha=0.5)
    for _ in range(300):
        example, passages, _ = _instance(rng)
        config = _random_config(rng, passages)
        selection = select_silver(example, passages, config, scorer=model, templates=CONTEXT_LAST)
        assert len(selection.spans) == len({s.key for s in selection.spans})
        for span in selection.spans:
            assert span.passage_rank <= config.top_k
            source = passages[span.passage_rank - 1].text
            assert source[span.char_start:span.char_end] == span.text


def test_str_inc_keeps_first_hits_up_to_max_spans():
    example = make_example(outputs=["1997"])
    passages = make_passages("Built in 1997. Rebuilt later. Closed in 1997.", "Reopened in 1997.")
    two = select_silver(example, passages, FilterConfig(top_k=2, max_spans=2))
    assert [s.key for s in two.spans] == [(1, 0), (1, 2)]
    five = select_silver(example, passages, FilterConfig(top_k=2, max_spans=5))
    assert [s.key for s in five.spans] == [(1, 0), (1, 2), (2, 0)]
    assert five.scores == [1.0, 1.0, 1.0]

    rng = random.Random(33)
    for _ in range(300):
        example, passages, _ = _instance(rng)
        k, m = rng.randrange(1, len(passages) + 1), rng.randrange(1, 5)
        hits = [s.key for s in enumerate_spans(passages, k)
                if any(o.lower() in s.text.lower() for o in example.outputs)]
        selection = select_silver(example, passages, FilterConfig(top_k=k, max_spans=m))
        assert [s.key for s in selection.spans] == (hits[:m] if hits else [])

import math
import random

import pytest

from ctxfilter.services.ngram_scorer import BOS, EOS, ngram_score, ngram_train
from ctxfilter.services.scorers import SequenceScorer, build_scorer


def test_bigram_counts():
    model = ngram_train(["a b", "a b"], n=2, alpha=1.0)
    assert model.vocabulary == frozenset({"a", "b", EOS})
    assert model.probability("b", ["a"]) == pytest.approx((2 + 1) / (2 + 3))


def test_unigram_is_context_free():
    model = ngram_train(["a b", "a c"], n=1, alpha=1.0)
    assert model.probability("a", ["b"]) == model.probability("a", [])
    # c(a) = 2 of 6 tokens (EOS included), |V| = 4
    assert model.probability("a") == pytest.approx((2 + 1) / (6 + 4))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_distributions_sum_to_one(n):
    rng = random.Random(n)
    words = ["red", "green", "blue", "cat", "dog"]
    corpus = [" ".join(rng.choice(words) for _ in range(rng.randrange(1, 8))) for _ in range(30)]
    model = ngram_train(corpus, n=n, alpha=0.3)
    contexts = [[], [BOS] * (n - 1), ["red"] * (n - 1), ["cat", "dog"][-(n - 1):] if n > 1 else [], ["unseen"] * n]
    for context in contexts:
        assert sum(model.distribution(context).values()) == pytest.approx(1.0, abs=1e-9)


def test_empty_target_scores_zero():
    model = ngram_train(["a b"], n=2)
    assert ngram_score(model, "a", "") == 0.0


def test_score_is_deterministic_and_finite():
    model = ngram_train(["the cat sat", "the dog sat"], n=2)
    first = model.score("the", "cat sat on the mat")
    assert math.isfinite(first)
    assert first == model.score("the", "cat sat on the mat")
    assert model.score_many([("the", "cat"), ("the", "dog")]) == [model.score("the", "cat"), model.score("the", "dog")]


def test_oov_token_gets_unseen_mass():
    model = ngram_train(["a b"], n=2, alpha=1.0)
    # c(a) = 1, |V| = 3
    assert model.probability("zebra", ["a"]) == pytest.approx(1 / (1 + 3))


def test_training_errors():
    with pytest.raises(ValueError):
        ngram_train([], n=2)
    with pytest.raises(ValueError):
        ngram_train(["a"], n=0)
    with pytest.raises(ValueError):
        ngram_train(["a"], alpha=0.0)


def test_factory_builds_a_sequence_scorer():
    scorer = build_scorer("ngram", corpus=["a b"], order=2)
    assert isinstance(scorer, SequenceScorer)
    assert build_scorer(None) is None


@pytest.mark.parametrize("n", [1, 2, 3])
def test_scores_compose_by_chain_rule(n):
    rng = random.Random(40 + n)
    words = ["red", "green", "blue", "cat", "dog"]
    corpus = [" ".join(rng.choice(words) for _ in range(rng.randrange(1, 8))) for _ in range(30)]
    model = ngram_train(corpus, n=n, alpha=0.5)
    pool = words + ["unseen"]

    def phrase():
        return " ".join(rng.choice(pool) for _ in range(rng.randrange(6)))

    for _ in range(100):
        prefix, a, b = phrase(), phrase(), phrase()
        whole = model.score(prefix, a + " " + b)
        parts = model.score(prefix, a) + model.score(prefix + " " + a, b)
        # summation order differs, so only the last bits may disagree
        assert whole == pytest.approx(parts, rel=1e-12)

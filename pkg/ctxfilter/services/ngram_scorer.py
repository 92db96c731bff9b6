"""
Additive-smoothed n-gram language model used as a deterministic SequenceScorer.

It is small enough to check by hand: P(w | ctx) = (c(ctx, w) + alpha) / (c(ctx) + alpha * |V|),
with V = corpus tokens plus the end sentinel. Begin sentinels pad every context.
"""

import math
from collections import Counter
from typing import Dict, Iterable, List, Sequence, Tuple

from ctxfilter.services.text_service import tokenize

BOS = "<s>"
EOS = "</s>"


class NGramModel:
    """Immutable once built by `ngram_train`; safe to share across threads."""

    def __init__(self, n: int, alpha: float, ngram_counts: Dict[Tuple[str, ...], int],
                 context_counts: Dict[Tuple[str, ...], int], vocabulary: frozenset):
        self.n = n
        self.alpha = alpha
        self._ngram_counts = dict(ngram_counts)
        self._context_counts = dict(context_counts)
        self.vocabulary = vocabulary
        self.vocab_size = len(vocabulary)

    def _context(self, history: Sequence[str]) -> Tuple[str, ...]:
        if self.n == 1:
            return ()
        return tuple(history[-(self.n - 1):])

    def probability(self, token: str, context: Sequence[str] = ()) -> float:
        ctx = self._context(list(context))
        count = self._ngram_counts.get(ctx + (token,), 0)
        context_count = self._context_counts.get(ctx, 0)
        return (count + self.alpha) / (context_count + self.alpha * self.vocab_size)

    def distribution(self, context: Sequence[str] = ()) -> Dict[str, float]:
        return {token: self.probability(token, context) for token in self.vocabulary}

    def score(self, prefix: str, target: str) -> float:
        """Sum of log P(token | previous n-1 tokens) over the target tokens."""
        history: List[str] = [BOS] * (self.n - 1) + tokenize(prefix)
        total = 0.0
        for token in tokenize(target):
            total += math.log(self.probability(token, history))
            history.append(token)
        return total

    def score_many(self, requests: Sequence[Tuple[str, str]]) -> List[float]:
        return [self.score(prefix, target) for prefix, target in requests]


def ngram_train(corpus: Iterable[str], n: int = 2, alpha: float = 1.0) -> NGramModel:
    if n < 1:
        raise ValueError("n-gram order must be >= 1")
    if alpha <= 0:
        raise ValueError("smoothing constant alpha must be > 0")

    ngram_counts: Counter = Counter()
    context_counts: Counter = Counter()
    vocabulary = {EOS}
    seen = 0
    for sentence in corpus:
        seen += 1
        tokens = tokenize(sentence)
        vocabulary.update(tokens)
        marked = [BOS] * (n - 1) + tokens + [EOS]
        for i in range(n - 1, len(marked)):
            context = tuple(marked[i - n + 1:i]) if n > 1 else ()
            ngram_counts[context + (marked[i],)] += 1
            context_counts[context] += 1
    if seen == 0:
        raise ValueError("cannot train an n-gram model on an empty corpus")
    return NGramModel(n, alpha, ngram_counts, context_counts, frozenset(vocabulary))


def ngram_score(model: NGramModel, prefix: str, target: str) -> float:
    return model.score(prefix, target)

from typing import List, Optional, Protocol, Sequence, Tuple, runtime_checkable


@runtime_checkable
class SequenceScorer(Protocol):
    """
    Anything that returns log P(target | prefix) summed over target tokens.
    Implementations must be deterministic and safe for concurrent calls.
    """

    def score(self, prefix: str, target: str) -> float:
        ...

    def score_many(self, requests: Sequence[Tuple[str, str]]) -> List[float]:
        ...


def build_scorer(kind: Optional[str], corpus=None, order: int = 2, alpha: float = 1.0,
                 url: Optional[str] = None, max_in_flight: int = 8) -> Optional[SequenceScorer]:
    """Factory used by the CLI for `--scorer {ngram, remote}`."""
    if kind is None:
        return None
    if kind == "ngram":
        from ctxfilter.services.ngram_scorer import ngram_train
        return ngram_train(corpus or [], order, alpha)
    if kind == "remote":
        from ctxfilter.services.remote_scorer import RemoteScorer
        return RemoteScorer(url=url, max_in_flight=max_in_flight)
    raise ValueError(f"Unknown scorer kind: {kind}")

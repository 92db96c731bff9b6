from typing import Optional


class CtxFilterError(Exception):
    """Base class for errors raised by ctxfilter."""


class DataError(CtxFilterError):
    """Malformed or invalid input data. `line` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigurationError(CtxFilterError):
    pass


class ScorerError(CtxFilterError):
    """A sequence scorer failed while scoring a specific span."""

    def __init__(self, message: str, passage_rank: Optional[int] = None, sentence_index: Optional[int] = None):
        self.passage_rank = passage_rank
        self.sentence_index = sentence_index
        where = ""
        if passage_rank is not None:
            where = f" [span rank={passage_rank} sentence={sentence_index}]"
        super().__init__(f"{message}{where}")


class RemoteScorerError(CtxFilterError):
    """
    A scoring request failed after all retries. One request carries a whole
    batch, so the failure covers items index .. stop - 1.
    """

    def __init__(self, message: str, index: int, status: Optional[int] = None, stop: Optional[int] = None):
        self.index = index
        self.stop = stop if stop is not None else index + 1
        self.status = status
        where = f"request {index}" if self.stop - index == 1 else f"requests {index}-{self.stop - 1}"
        super().__init__(f"{where}: {message}")


class ProtocolError(CtxFilterError):
    """The scoring server answered with a body that does not follow the protocol."""

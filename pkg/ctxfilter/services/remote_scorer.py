import json
import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import requests

from ctxfilter.errors import ConfigurationError, ProtocolError, RemoteScorerError

logger = logging.getLogger(__name__)

SCORER_URL_ENV = "FILCO_SCORER_URL"


class RemoteScorer:
    """
    Client for a generator model served over HTTP.

    POST {"items": [{"prefix": str, "target": str}, ...]}
    ->   {"items": [{"logprob": float}, ...]}   (same length and order)

    One worker pool and one `requests.Session` per worker thread live as long as
    the client; `close()` (or leaving a `with` block) releases them.
    """

    def __init__(self, url: Optional[str] = None, max_in_flight: int = 8, batch_size: int = 16,
                 attempts: int = 3, backoff: float = 0.5, timeout: float = 60.0):
        self.url = url or os.getenv(SCORER_URL_ENV)
        if not self.url:
            raise ConfigurationError(f"Scorer URL must be provided (--scorer-url) or set in {SCORER_URL_ENV}.")
        if max_in_flight < 1 or batch_size < 1 or attempts < 1:
            raise ConfigurationError("max_in_flight, batch_size and attempts must be >= 1")

        self.max_in_flight = max_in_flight
        self.batch_size = batch_size
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self.headers = {"Content-Type": "application/json"}
        # caps concurrent POSTs for this client across all callers
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._local = threading.local()
        self._lock = threading.Lock()
        self._sessions: List[requests.Session] = []
        self._pool: Optional[ThreadPoolExecutor] = None

    def __enter__(self) -> "RemoteScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        with self._lock:
            pool, self._pool = self._pool, None
            sessions, self._sessions = self._sessions, []
        if pool is not None:
            pool.shutdown(wait=True)
        for session in sessions:
            session.close()

    def _executor(self) -> ThreadPoolExecutor:
        with self._lock:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=self.max_in_flight, thread_name_prefix="remote-scorer")
            return self._pool

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            self._local.session = session
            with self._lock:
                self._sessions.append(session)
        return session

    def _post(self, payload: Dict[str, Any], start: int, stop: int) -> Any:
        body = json.dumps(payload)
        response = None
        last_error: Optional[RemoteScorerError] = None

        for attempt in range(self.attempts):
            try:
                with self._slots:
                    response = self._session().post(self.url, headers=self.headers, data=body, timeout=self.timeout)
                if 200 <= response.status_code < 300:
                    break
                last_error = RemoteScorerError(f"HTTP {response.status_code}", start, response.status_code, stop)
            except requests.exceptions.RequestException as e:
                last_error = RemoteScorerError(str(e), start, stop=stop)
            response = None

            if attempt < self.attempts - 1:
                delay = self.backoff * (2 ** attempt)
                logger.warning(f"[RemoteScorer] Attempt {attempt + 1} for items {start}-{stop - 1} failed "
                               f"({last_error}). Retrying in {delay:.2f}s...")
                time.sleep(delay)

        if response is None:
            raise last_error

        try:
            return json.loads(response.text)
        except ValueError as e:
            raise ProtocolError(f"items {start}-{stop - 1}: response body is not JSON: {e}") from e

    def _score_batch(self, start: int, batch: Sequence[Tuple[str, str]]) -> List[float]:
        payload = {"items": [{"prefix": prefix, "target": target} for prefix, target in batch]}
        data = self._post(payload, start, start + len(batch))

        items = data.get("items") if isinstance(data, dict) else None
        if not isinstance(items, list) or len(items) != len(batch):
            raise ProtocolError(f"items {start}-{start + len(batch) - 1}: expected {len(batch)} items in response")

        values = []
        for offset, item in enumerate(items):
            logprob = item.get("logprob") if isinstance(item, dict) else None
            if isinstance(logprob, bool) or not isinstance(logprob, (int, float)) or not math.isfinite(logprob):
                raise ProtocolError(f"request {start + offset}: missing or non-finite 'logprob'")
            values.append(float(logprob))
        return values

    def remote_score(self, requests_: Sequence[Tuple[str, str]]) -> List[float]:
        """Scores (prefix, target) pairs; results are aligned to request order."""
        if not requests_:
            raise ValueError("remote_score needs a non-empty batch")

        batches = [(start, requests_[start:start + self.batch_size])
                   for start in range(0, len(requests_), self.batch_size)]
        logger.debug(f"[RemoteScorer] Scoring {len(requests_)} items in {len(batches)} batch(es)")

        if len(batches) == 1:
            return self._score_batch(*batches[0])

        pool = self._executor()
        futures = [(start, pool.submit(self._score_batch, start, batch)) for start, batch in batches]
        results: List[float] = [0.0] * len(requests_)
        for start, future in futures:
            values = future.result()
            results[start:start + len(values)] = values
        return results

    def score(self, prefix: str, target: str) -> float:
        return self.remote_score([(prefix, target)])[0]

    def score_many(self, requests_: Sequence[Tuple[str, str]]) -> List[float]:
        if not requests_:
            return []
        return self.remote_score(requests_)


def remote_score(endpoint: str, requests_: Sequence[Tuple[str, str]], **kwargs) -> List[float]:
    with RemoteScorer(url=endpoint, **kwargs) as scorer:
        return scorer.remote_score(requests_)

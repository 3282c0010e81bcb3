"""Rate-limited Bugzilla REST client producing comment exports."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import requests

from .errors import ContractError, FetchError

log = logging.getLogger(__name__)


class RateLimiter:
    """Spaces calls at least ``1 / rate`` seconds apart (bucket of size one)."""

    def __init__(self, rate, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ContractError("rate limit must be positive")
        self.interval = 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._next = None

    def acquire(self):
        now = self._clock()
        if self._next is not None and now < self._next:
            self._sleep(self._next - now)
            now = self._next
        self._next = now + self.interval


@dataclass
class FetchResult:
    export: bytes
    fetched: list = field(default_factory=list)
    errors: list = field(default_factory=list)   # FetchError instances


def _comments(payload, bug_id):
    bugs = payload.get("bugs", {})
    body = bugs.get(str(bug_id)) or bugs.get(bug_id) or {}
    out = []
    for c in body.get("comments", []):
        out.append({
            "id": c.get("id", c.get("count")),
            "author": c.get("creator") or c.get("author"),
            "creation_time": c.get("creation_time") or c.get("time"),
            "text": c.get("text", ""),
        })
    return out


def fetch_bugzilla(base_url, bug_range, rate_limit=1.0, max_retries=3, timeout=30.0,
                   backoff=0.5, session=None, limiter=None) -> FetchResult:
    """Download comments for bugs ``low..high`` (inclusive).

    Every HTTP request, retries included, goes through the rate limiter.
    4xx responses are permanent failures for that bug; 5xx responses,
    timeouts and connection errors are retried up to ``max_retries`` times.
    The export has the schema read by ``parse_bugzilla_export(format="json")``.
    """
    low, high = bug_range
    if low > high:
        raise ContractError("bug range needs low <= high")
    session = session or requests.Session()
    limiter = limiter or RateLimiter(rate_limit)
    base = base_url.rstrip("/")
    result = FetchResult(b"")
    bugs = []
    for bug_id in range(low, high + 1):
        url = f"{base}/rest/bug/{bug_id}/comment"
        attempt = 0
        while True:
            limiter.acquire()
            try:
                resp = session.get(url, timeout=timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                status, reason = None, f"{type(exc).__name__}: {exc}"
            else:
                status = resp.status_code
                if status < 400:
                    try:
                        bugs.append({"id": bug_id, "comments": _comments(resp.json(), bug_id)})
                        result.fetched.append(bug_id)
                    except ValueError:
                        result.errors.append(FetchError(f"bug {bug_id}: response is not JSON", bug_id, status))
                    break
                reason = f"HTTP {status}"
                if status < 500:
                    result.errors.append(FetchError(f"bug {bug_id}: {reason}", bug_id, status))
                    break
            attempt += 1
            if attempt > max_retries:
                result.errors.append(FetchError(f"bug {bug_id}: {reason} after {max_retries} retries",
                                                bug_id, status))
                break
            log.warning("bug %s: %s, retry %d/%d", bug_id, reason, attempt, max_retries)
            if backoff:
                time.sleep(backoff * attempt)
    result.export = json.dumps({"bugs": bugs}, ensure_ascii=False).encode("utf-8")
    return result

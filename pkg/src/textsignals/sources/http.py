"""HTTP plumbing shared by the API clients: retries, pacing and a disk cache."""
from __future__ import annotations

import email.utils
import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping
from urllib.parse import urlsplit

import requests

log = logging.getLogger(__name__)

USER_AGENT = "textsignals/0.1 (dataset builder; https://github.com/)"


class SourceError(Exception):
    """Base class for data-acquisition failures."""


class TransportError(SourceError):
    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class HttpStatusError(SourceError):
    def __init__(self, status_code: int, url: str = ""):
        super().__init__(f"HTTP {status_code} for {url}" if url else f"HTTP {status_code}")
        self.status_code = status_code
        self.url = url


class NotFound(HttpStatusError):
    pass


class DecodeError(SourceError):
    pass


@dataclass
class HttpResponse:
    status_code: int
    content: bytes = b""
    headers: Mapping[str, str] = field(default_factory=dict)
    url: str = ""

    @property
    def text(self) -> str:
        return self.content.decode("utf-8")

    def json(self):
        try:
            return json.loads(self.content)
        except (ValueError, UnicodeDecodeError) as exc:
            raise DecodeError(f"invalid JSON from {self.url or 'response'}: {exc}") from exc

    def header(self, name: str) -> str | None:
        lname = name.lower()
        for key, value in self.headers.items():
            if key.lower() == lname:
                return value
        return None


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_delay: float = 0.5
    max_delay: float = 30.0
    jitter_fraction: float = 0.1

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_delay <= 0 or self.max_delay <= 0:
            raise ValueError("delays must be positive")
        if not 0.0 <= self.jitter_fraction <= 1.0:
            raise ValueError("jitter_fraction must be in [0, 1]")

    def delay(self, retry_index: int, rng: random.Random | None = None) -> float:
        base = min(self.max_delay, self.base_delay * 2 ** retry_index)
        if self.jitter_fraction:
            rng = rng or random
            base *= 1.0 + self.jitter_fraction * rng.uniform(-1.0, 1.0)
        return base


def _retry_after(response: HttpResponse) -> float | None:
    value = response.header("Retry-After")
    if value is None:
        return None
    value = value.strip()
    if value.isdigit():
        return float(value)
    try:
        when = email.utils.parsedate_to_datetime(value)
    except (TypeError, ValueError):
        return None
    return max(0.0, when.timestamp() - time.time())


def _is_retryable_status(code: int) -> bool:
    return code == 429 or code >= 500


def with_retry(policy: RetryPolicy, request: Callable[[], HttpResponse], *,
               sleep: Callable[[float], None] = time.sleep, rng: random.Random | None = None) -> HttpResponse:
    """Call ``request`` until it yields a non-retryable response.

    Transport exceptions, 429 and 5xx are retried with exponential backoff
    (``Retry-After`` wins when present). Other 4xx raise immediately:
    404 as :class:`NotFound`, the rest as :class:`HttpStatusError`.
    """
    last: str = ""
    for attempt in range(1, policy.max_attempts + 1):
        wait = None
        try:
            response = request()
        except (requests.RequestException, OSError, TransportError) as exc:
            last = f"{type(exc).__name__}: {exc}"
        else:
            code = response.status_code
            if code < 400:
                return response
            if not _is_retryable_status(code):
                if code == 404:
                    raise NotFound(code, response.url)
                raise HttpStatusError(code, response.url)
            last = f"HTTP {code}"
            wait = _retry_after(response)
        if attempt == policy.max_attempts:
            break
        delay = wait if wait is not None else policy.delay(attempt - 1, rng)
        log.debug("attempt %d failed (%s); retrying in %.2fs", attempt, last, delay)
        sleep(delay)
    raise TransportError(f"giving up after {policy.max_attempts} attempt(s): {last}", attempts=policy.max_attempts)


class HostThrottle:
    """At most ``max_in_flight`` concurrent requests and ``min_interval`` spacing per host."""

    def __init__(self, max_in_flight: int = 4, min_interval: float = 0.1,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.max_in_flight = max_in_flight
        self.min_interval = min_interval
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._hosts: dict[str, tuple[threading.Semaphore, list[float]]] = {}

    def _host(self, host: str):
        with self._lock:
            if host not in self._hosts:
                self._hosts[host] = (threading.Semaphore(self.max_in_flight), [float("-inf")])
            return self._hosts[host]

    def run(self, host: str, fn: Callable[[], HttpResponse]) -> HttpResponse:
        sem, last = self._host(host)
        with sem:
            with self._lock:
                now = self._clock()
                slot = max(now, last[0] + self.min_interval)
                last[0] = slot
            if slot > now:
                self._sleep(slot - now)
            return fn()


Transport = Callable[..., HttpResponse]


def requests_transport(method: str, url: str, *, params=None, headers=None, data=None,
                       timeout: float = 30.0) -> HttpResponse:
    resp = requests.request(method, url, params=params, headers=headers, data=data, timeout=timeout)
    return HttpResponse(resp.status_code, resp.content, dict(resp.headers), resp.url)


def cache_key(method: str, url: str, params: Mapping | None = None, data: Mapping | None = None) -> str:
    canonical = json.dumps(
        {
            "method": method.upper(),
            "url": url,
            "params": sorted((str(k), str(v)) for k, v in (params or {}).items()),
            "data": sorted((str(k), str(v)) for k, v in (data or {}).items()),
        },
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def default_cache_dir() -> Path | None:
    value = os.environ.get("NEWS_SIGNALS_CACHE_DIR")
    return Path(value) if value else None


class HttpClient:
    """Shared handle combining transport, pacing, retries and an optional disk cache.

    Only 2xx responses are cached. Cache entries are keyed by method, URL
    (which carries the date range for the REST endpoints) and sorted query
    parameters.
    """

    def __init__(self, policy: RetryPolicy | None = None, transport: Transport | None = None,
                 cache_dir: str | os.PathLike | None = None, throttle: HostThrottle | None = None,
                 sleep: Callable[[float], None] = time.sleep, user_agent: str = USER_AGENT,
                 seed: int | None = None):
        self.policy = policy or RetryPolicy()
        self.transport = transport or requests_transport
        self.cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        self.throttle = throttle or HostThrottle(sleep=sleep)
        self.sleep = sleep
        self.user_agent = user_agent
        self._rng = random.Random(seed)

    def request(self, method: str, url: str, *, params: Mapping | None = None,
                headers: Mapping[str, str] | None = None, data: Mapping | None = None,
                use_cache: bool = True) -> HttpResponse:
        key = cache_key(method, url, params, data)
        cached = self._cache_get(key) if use_cache else None
        if cached is not None:
            return cached
        hdrs = {"User-Agent": self.user_agent, **(headers or {})}
        host = urlsplit(url).netloc

        def attempt() -> HttpResponse:
            return self.throttle.run(
                host, lambda: self.transport(method, url, params=params, headers=hdrs, data=data)
            )

        response = with_retry(self.policy, attempt, sleep=self.sleep, rng=self._rng)
        if use_cache:
            self._cache_put(key, response)
        return response

    def get(self, url: str, **kwargs) -> HttpResponse:
        return self.request("GET", url, **kwargs)

    def post(self, url: str, **kwargs) -> HttpResponse:
        return self.request("POST", url, **kwargs)

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / "http" / key[:2] / f"{key}.json"

    def _cache_get(self, key: str) -> HttpResponse | None:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            return HttpResponse(entry["status_code"], entry["content"].encode("utf-8"),
                                entry.get("headers", {}), entry.get("url", ""))
        except (ValueError, KeyError, OSError):
            log.warning("ignoring unreadable cache entry %s", path)
            return None

    def _cache_put(self, key: str, response: HttpResponse) -> None:
        path = self._cache_path(key)
        if path is None or not 200 <= response.status_code < 300:
            return
        try:
            content = response.content.decode("utf-8")
        except UnicodeDecodeError:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"status_code": response.status_code, "content": content,
                                   "url": response.url}), encoding="utf-8")
        tmp.replace(path)

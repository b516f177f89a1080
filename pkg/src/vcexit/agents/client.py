"""Chat-completion client with an on-disk response cache.

Responses are cached under ``cache_dir/<sha256>`` where the hash covers the
model name, temperature and prompt. A warm cache makes reruns fully offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import httpx

from ..errors import CacheCorrupt, EndpointUnreachable, NonSuccessStatus

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "VCEXIT_API_KEY"


@dataclass(frozen=True)
class ClientConfig:
    model_name: str
    cache_dir: Path
    base_url: str = "http://localhost:8000/v1"
    temperature: float = 0.0
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_retries: int = 3
    backoff_base: float = 1.0
    backoff_max: float = 30.0
    timeout: float = 60.0
    max_in_flight: int = 4
    requests_per_second: float | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")
        object.__setattr__(self, "cache_dir", Path(self.cache_dir))


def cache_key(model_name: str, temperature: float, prompt: str) -> str:
    body = json.dumps(
        {"model": model_name, "temperature": float(temperature), "prompt": prompt},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


class TokenBucket:
    """Thread-safe token bucket; ``acquire`` blocks until a token is free."""

    def __init__(self, rate: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


class ChatClient:
    def __init__(
        self,
        config: ClientConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleep
        self._http = httpx.Client(base_url=config.base_url, timeout=config.timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._bucket = TokenBucket(config.requests_per_second, sleep=sleep) if config.requests_per_second else None
        self._stats_lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.requests = 0

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def cache_path(self, prompt: str) -> Path:
        return self.config.cache_dir / cache_key(self.config.model_name, self.config.temperature, prompt)

    def _read_cache(self, path: Path, key: str) -> str | None:
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            return None
        try:
            entry = json.loads(raw.decode("utf-8"))
            if entry["key"] != key or not isinstance(entry["response"], str):
                raise ValueError("key mismatch")
        except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
            raise CacheCorrupt(f"cache entry {path.name} unreadable: {exc}") from None
        return entry["response"]

    def _write_cache(self, path: Path, key: str, response: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        data = json.dumps({"key": key, "response": response}, ensure_ascii=False, sort_keys=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def complete(self, prompt: str) -> str:
        key = cache_key(self.config.model_name, self.config.temperature, prompt)
        path = self.config.cache_dir / key
        cached = self._read_cache(path, key)
        if cached is not None:
            with self._stats_lock:
                self.hits += 1
            return cached
        with self._stats_lock:
            self.misses += 1
        response = self._post(prompt)
        self._write_cache(path, key, response)
        return response

    def _headers(self) -> dict[str, str]:
        token = os.environ.get(self.config.api_key_env)
        return {"Authorization": f"Bearer {token}"} if token else {}

    def _backoff(self, attempt: int) -> None:
        delay = min(self.config.backoff_max, self.config.backoff_base * 2**attempt)
        if delay > 0:
            self._sleep(delay * (0.8 + 0.4 * random.random()))

    def _post(self, prompt: str) -> str:
        body = {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        last_error = "no attempt made"
        for attempt in range(self.config.max_retries):
            if attempt:
                self._backoff(attempt - 1)
            if self._bucket is not None:
                self._bucket.acquire()
            with self._slots:
                with self._stats_lock:
                    self.requests += 1
                try:
                    resp = self._http.post("/chat/completions", json=body, headers=self._headers())
                except httpx.TransportError as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                    logger.warning("attempt %d/%d failed: %s", attempt + 1, self.config.max_retries, last_error)
                    continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("attempt %d/%d failed: %s", attempt + 1, self.config.max_retries, last_error)
                continue
            if resp.status_code >= 300:
                raise NonSuccessStatus(resp.status_code, resp.text)
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise NonSuccessStatus(resp.status_code, f"malformed completion body: {resp.text}") from None
        raise EndpointUnreachable(
            f"{self.config.base_url} failed after {self.config.max_retries} attempts ({last_error})"
        )


def complete_with_cache(
    config: ClientConfig,
    prompt: str,
    transport: httpx.BaseTransport | None = None,
) -> str:
    with ChatClient(config, transport=transport) as client:
        return client.complete(prompt)

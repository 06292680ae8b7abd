"""Content-addressed response cache: append-only JSONL, fsync'd on write.

Writes are serialized behind a lock so concurrent in-flight requests cannot
interleave records.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from .client import LlmRequest, LlmResponse


class ResponseCache:
    """One JSONL record per request key; replays are byte-identical."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._records[record["key"]] = record

    def __len__(self) -> int:
        return len(self._records)

    def get(self, key: str) -> dict | None:
        record = self._records.get(key)
        return record["response"] if record else None

    def put(self, key: str, request: dict, response: dict) -> None:
        with self._lock:
            if key in self._records:
                return
            record = {"key": key, "request": request, "response": response}
            self._records[key] = record
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")
                handle.flush()
                os.fsync(handle.fileno())


class CachingClient:
    """Wraps any client so each unique request hits the network at most once.

    Concurrent requests for the same key are coalesced: one caller fetches
    while the rest wait on a per-key lock and then replay from the cache.
    """

    def __init__(self, inner, cache: ResponseCache | str | Path):
        self.inner = inner
        self.cache = cache if isinstance(cache, ResponseCache) else ResponseCache(cache)
        self._guard = threading.Lock()
        self._inflight: dict[str, threading.Lock] = {}

    def _replay(self, cached: dict) -> LlmResponse:
        return LlmResponse(
            completions=list(cached["completions"]),
            usage=dict(cached.get("usage", {})),
            cache_hit=True,
            attempts=0,
        )

    def send(self, request: LlmRequest) -> LlmResponse:
        key = request.cache_key()
        while True:
            cached = self.cache.get(key)
            if cached is not None:
                return self._replay(cached)
            with self._guard:
                pending = self._inflight.get(key)
                if pending is None:
                    pending = threading.Lock()
                    pending.acquire()
                    self._inflight[key] = pending
                    owned = True
                else:
                    owned = False
            if not owned:
                # wait for the owner, then re-check the cache
                pending.acquire()
                pending.release()
                continue
            try:
                response = self.inner.send(request)
                self.cache.put(
                    key,
                    request={
                        "prompt": request.prompt,
                        "n": request.n_completions,
                        "temperature": request.temperature,
                        "max_tokens": request.max_tokens,
                        "model": request.model,
                    },
                    response={
                        "completions": response.completions,
                        "usage": response.usage,
                    },
                )
                return response
            finally:
                with self._guard:
                    del self._inflight[key]
                pending.release()

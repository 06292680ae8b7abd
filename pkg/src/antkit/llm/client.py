"""Chat-completion client: OpenAI-compatible JSON over HTTP.

Requests are single-user-message chat completions, so the client works
against hosted APIs and local inference servers alike. Transient failures
are retried with exponential backoff; authentication failures are not.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable

from ..errors import AuthError, ConfigError, EndpointUnavailable
from .prompts import PromptBundle

DEFAULT_API_KEY_ENV = "ANTKIT_API_KEY"
DEFAULT_ENDPOINT_ENV = "ANTKIT_ENDPOINT"


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    n_completions: int = 1
    temperature: float = 0.0
    max_tokens: int = 1024
    model: str = "default"

    def __post_init__(self):
        if self.n_completions < 1:
            raise ConfigError("n_completions must be >= 1")

    def cache_key(self) -> str:
        payload = json.dumps(
            {
                "prompt": self.prompt,
                "n": self.n_completions,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
                "model": self.model,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class LlmResponse:
    completions: list[str]
    usage: dict = field(default_factory=dict)
    cache_hit: bool = False
    attempts: int = 1


def _default_transport(
    url: str, headers: dict, payload: dict, timeout: float
) -> tuple[int, dict]:
    import requests

    response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    try:
        body = response.json()
    except ValueError:
        body = {"error": response.text}
    return response.status_code, body


class HttpLlmClient:
    """Minimal chat-completion client with retry and backoff.

    ``transport`` is injectable for tests: a callable
    ``(url, headers, payload, timeout) -> (status_code, body_dict)``.
    """

    def __init__(
        self,
        endpoint_url: str | None = None,
        model: str = "default",
        api_key_env: str = DEFAULT_API_KEY_ENV,
        max_attempts: int = 4,
        backoff_base: float = 0.5,
        backoff_cap: float = 8.0,
        timeout: float = 60.0,
        transport: Callable | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint_url = endpoint_url or os.environ.get(DEFAULT_ENDPOINT_ENV)
        if not self.endpoint_url:
            raise ConfigError(
                f"no endpoint configured (set {DEFAULT_ENDPOINT_ENV} or pass endpoint_url)"
            )
        self.model = model
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.timeout = timeout
        self.transport = transport or _default_transport
        self.sleep = sleep

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def send(self, request: LlmRequest) -> LlmResponse:
        payload = {
            "model": request.model if request.model != "default" else self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "n": request.n_completions,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        last_error = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            try:
                status, body = self.transport(
                    self.endpoint_url, self._headers(), payload, self.timeout
                )
            except Exception as exc:
                status, body = -1, {"error": repr(exc)}
            if status in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {status})")
            if status == 200:
                try:
                    completions = [
                        choice["message"]["content"] for choice in body["choices"]
                    ]
                except (KeyError, TypeError) as exc:
                    raise EndpointUnavailable(f"malformed response body: {exc}") from None
                if len(completions) != request.n_completions:
                    raise EndpointUnavailable(
                        f"asked for {request.n_completions} completions, got {len(completions)}"
                    )
                return LlmResponse(
                    completions=completions,
                    usage=body.get("usage", {}),
                    attempts=attempt,
                )
            last_error = f"HTTP {status}: {body.get('error', body)}"
            if attempt < self.max_attempts:
                self.sleep(min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1)))
        raise EndpointUnavailable(
            f"{self.max_attempts} attempts failed, last error: {last_error}"
        )


def complete(client, bundle: PromptBundle, n: int, temperature: float, **kwargs) -> LlmResponse:
    """Render a bundle and request ``n`` completions from any client."""
    request = LlmRequest(
        prompt=bundle.render(), n_completions=n, temperature=temperature, **kwargs
    )
    return client.send(request)


def complete_many(
    client,
    bundles: list[PromptBundle],
    n: int,
    temperature: float,
    max_concurrency: int = 1,
    **kwargs,
) -> list[LlmResponse]:
    """Complete several bundles with bounded concurrent in-flight requests.

    Responses come back in bundle order regardless of completion order, so
    downstream aggregation stays deterministic.
    """
    if max_concurrency <= 1 or len(bundles) <= 1:
        return [complete(client, bundle, n, temperature, **kwargs) for bundle in bundles]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        return list(
            pool.map(lambda b: complete(client, b, n, temperature, **kwargs), bundles)
        )

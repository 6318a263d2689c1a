"""Minimal chat-completion HTTP client with retries."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Any

import httpx

log = logging.getLogger(__name__)

ENDPOINT_ENV = "SILOSIM_ENDPOINT"
API_KEY_ENV = "SILOSIM_API_KEY"


class ChatError(RuntimeError):
    pass


class AuthError(ChatError):
    """Credentials rejected; retrying cannot help."""


class RetriesExhausted(ChatError):
    pass


class _Retryable(ChatError):
    pass


@dataclass(frozen=True)
class ChatEndpointConfig:
    base_url: str
    model: str
    api_key: str | None = None
    temperature: float | None = None  # None leaves the provider default
    max_in_flight: int = 8
    timeout: float = 120.0
    retries: int = 3
    backoff: float = 1.0  # seconds before the first retry, doubled each time

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be nonnegative")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_env(cls, model: str, **overrides: Any) -> "ChatEndpointConfig":
        base = overrides.pop("base_url", None) or os.environ.get(ENDPOINT_ENV)
        if not base:
            raise ValueError(f"no endpoint configured (set {ENDPOINT_ENV} or pass base_url)")
        key = overrides.pop("api_key", None) or os.environ.get(API_KEY_ENV)
        return cls(base_url=base, model=model, api_key=key, **overrides)


class ChatClient:
    def __init__(self, config: ChatEndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self.audit: list[dict] = []
        self._audit_lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ChatClient":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def probe(self) -> None:
        """Raise ChatError if nothing answers at the endpoint; any HTTP status counts as reachable."""
        try:
            self._http.get(self.config.base_url, timeout=min(self.config.timeout, 10.0))
        except httpx.TransportError as exc:
            raise ChatError(f"endpoint unreachable: {exc}") from exc

    def _url(self) -> str:
        return self.config.base_url.rstrip("/") + "/chat/completions"

    def _once(self, body: dict) -> tuple[str, int]:
        headers = {"Authorization": f"Bearer {self.config.api_key}"} if self.config.api_key else {}
        try:
            resp = self._http.post(self._url(), json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise _Retryable(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise _Retryable(f"transport error: {exc}") from exc
        with self._audit_lock:
            # the key only ever travels in the header, so bodies are safe to keep
            self.audit.append({"request": body, "status": resp.status_code, "response": resp.text[:4096]})
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _Retryable(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ChatError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
            tokens = int(data["usage"]["completion_tokens"])
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise _Retryable(f"malformed response: {exc}") from exc
        if not isinstance(text, str) or tokens < 0:
            raise _Retryable("malformed response: bad content or token count")
        return text, tokens

    def invoke(self, messages: list[dict]) -> tuple[str, int]:
        """One completion: returns (text, provider-reported output tokens)."""
        body: dict[str, Any] = {"model": self.config.model, "messages": messages}
        if self.config.temperature is not None:
            body["temperature"] = self.config.temperature
        delay = self.config.backoff
        last: Exception | None = None
        with self._slots:
            for attempt in range(self.config.retries + 1):
                try:
                    return self._once(body)
                except _Retryable as exc:
                    last = exc
                    log.warning("chat request failed (attempt %d): %s", attempt + 1, exc)
                    if attempt < self.config.retries:
                        time.sleep(delay)
                        delay *= 2
        raise RetriesExhausted(str(last))

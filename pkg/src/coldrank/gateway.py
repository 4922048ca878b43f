"""Chat-completion backends: a networked client and a deterministic mock.

The networked backend retries transient failures (429/5xx/timeouts) with
exponential backoff. The mock backend answers by request_tag so tests and
offline runs are bit-deterministic. A Gateway wraps either one and enforces
a global in-flight cap shared across worker threads.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

from .errors import BadStatus, EmptyChoice, MissingFile, TransportError, UnknownTag

ROLES = ("system", "user", "assistant")
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})

DEFAULT_TIMEOUT = 60.0
DEFAULT_MAX_RETRIES = 4
BACKOFF_BASE_SECONDS = 0.5
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER = 0.2


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]  # (role, content) pairs
    temperature: float
    max_tokens: int
    request_tag: str

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0][0] not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        for role, _ in self.messages:
            if role not in ROLES:
                raise ValueError(f"unknown message role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: int
    retry_count: int = 0


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def _estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4)


class MockBackend:
    """Scripted backend keyed on request_tag, immune to prompt-text drift."""

    def __init__(self, responses: dict[str, str], default: str | None = None) -> None:
        self._responses = dict(responses)
        self._default = default
        self._lock = threading.Lock()
        self.call_log: list[str] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.call_log.append(request.request_tag)
        content = self._responses.get(request.request_tag, self._default)
        if content is None:
            raise UnknownTag(request.request_tag)
        prompt_text = "\n".join(c for _, c in request.messages)
        return ChatResponse(
            content=content,
            finish_reason="stop",
            prompt_tokens=_estimate_tokens(prompt_text),
            completion_tokens=_estimate_tokens(content),
            latency_ms=0,
        )


def load_mock_script(path: str | Path) -> MockBackend:
    """Build a MockBackend from mock_script.json ({"responses": ..., "default": ...})."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"mock script not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    return MockBackend(responses=payload.get("responses", {}), default=payload.get("default"))


class HttpBackend:
    """POSTs to {base_url}/v1/chat/completions with retry and backoff."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        *,
        timeout: float = DEFAULT_TIMEOUT,
        max_retries: int = DEFAULT_MAX_RETRIES,
        backoff_base: float = BACKOFF_BASE_SECONDS,
        backoff_factor: float = BACKOFF_FACTOR,
        jitter: float = BACKOFF_JITTER,
        session: requests.Session | None = None,
        sleep=time.sleep,
        rng: random.Random | None = None,
    ) -> None:
        self._url = base_url.rstrip("/") + "/v1/chat/completions"
        self._api_key = api_key
        self._timeout = timeout
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        self._backoff_factor = backoff_factor
        self._jitter = jitter
        self._session = session or requests.Session()
        self._sleep = sleep
        self._rng = rng or random.Random()

    def _delay(self, attempt: int) -> float:
        base = self._backoff_base * (self._backoff_factor**attempt)
        return base * (1.0 + self._rng.uniform(-self._jitter, self._jitter))

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": request.model,
            "messages": [{"role": role, "content": content} for role, content in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"

        last_error: Exception | None = None
        for attempt in range(self._max_retries + 1):
            if attempt:
                self._sleep(self._delay(attempt - 1))
            started = time.monotonic()
            try:
                response = self._session.post(
                    self._url, json=body, headers=headers, timeout=self._timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code in RETRYABLE_STATUSES:
                last_error = BadStatus(response.status_code, getattr(response, "text", ""))
                continue
            if response.status_code != 200:
                raise BadStatus(response.status_code, getattr(response, "text", ""))
            return self._parse_response(
                response.json(),
                latency_ms=int((time.monotonic() - started) * 1000),
                retry_count=attempt,
            )
        raise TransportError(
            f"request {request.request_tag!r} failed after {self._max_retries} retries: {last_error}"
        )

    @staticmethod
    def _parse_response(payload: dict, latency_ms: int, retry_count: int) -> ChatResponse:
        choices = payload.get("choices") or []
        if not choices:
            raise EmptyChoice("response carried no choices")
        first = choices[0]
        content = (first.get("message") or {}).get("content")
        finish_reason = first.get("finish_reason") or "stop"
        if content is None and finish_reason == "stop":
            raise EmptyChoice("normal stop without content")
        usage = payload.get("usage") or {}
        return ChatResponse(
            content=content or "",
            finish_reason=finish_reason,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=latency_ms,
            retry_count=retry_count,
        )


class Gateway:
    """Shared front door enforcing a global cap on in-flight completions."""

    def __init__(self, backend: ChatBackend, max_concurrency: int = 4) -> None:
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self._backend = backend
        self._semaphore = threading.Semaphore(max_concurrency)
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_concurrency = max_concurrency
        self.high_water_mark = 0
        self.call_log: list[str] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._semaphore:
            with self._lock:
                self._in_flight += 1
                self.high_water_mark = max(self.high_water_mark, self._in_flight)
            try:
                response = self._backend.complete(request)
            finally:
                with self._lock:
                    self._in_flight -= 1
            with self._lock:
                self.call_log.append(request.request_tag)
            return response

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from coldrank.errors import BadStatus, EmptyChoice, TransportError, UnknownTag
from coldrank.gateway import (
    ChatRequest,
    Gateway,
    HttpBackend,
    MockBackend,
    load_mock_script,
)


def _request(tag="t1", temperature=0.0):
    return ChatRequest(
        model="m",
        messages=(("system", "sys"), ("user", "hello")),
        temperature=temperature,
        max_tokens=128,
        request_tag=tag,
    )


def test_chat_request_validation():
    with pytest.raises(ValueError):
        ChatRequest("m", (), 0.0, 10, "t")
    with pytest.raises(ValueError):
        ChatRequest("m", (("assistant", "x"),), 0.0, 10, "t")
    with pytest.raises(ValueError):
        ChatRequest("m", (("user", "x"),), -0.5, 10, "t")
    with pytest.raises(ValueError):
        ChatRequest("m", (("user", "x"),), 0.0, 0, "t")
    with pytest.raises(ValueError):
        ChatRequest("m", (("user", "x"), ("oracle", "y")), 0.0, 10, "t")


def test_mock_backend_scripted():
    backend = MockBackend({"t1": "hello"})
    response = backend.complete(_request("t1"))
    assert response.content == "hello"
    assert response.finish_reason == "stop"
    assert response.latency_ms == 0


def test_mock_backend_unknown_tag():
    backend = MockBackend({"t1": "hello"})
    with pytest.raises(UnknownTag):
        backend.complete(_request("t2"))


def test_mock_backend_default():
    backend = MockBackend({"t1": "hello"}, default="fallback")
    assert backend.complete(_request("t9")).content == "fallback"


def test_mock_backend_empty_script_rejects_everything(tmp_path):
    path = tmp_path / "mock_script.json"
    path.write_text(json.dumps({"responses": {}}), encoding="utf-8")
    backend = load_mock_script(path)
    with pytest.raises(UnknownTag):
        backend.complete(_request("anything"))


def test_load_mock_script(tmp_path):
    path = tmp_path / "mock_script.json"
    path.write_text(
        json.dumps({"responses": {"a": "one", "b": "two"}, "default": "dflt"}), encoding="utf-8"
    )
    backend = load_mock_script(path)
    assert backend.complete(_request("a")).content == "one"
    assert backend.complete(_request("b")).content == "two"
    assert backend.complete(_request("zzz")).content == "dflt"


class _FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = text

    def json(self):
        return self._payload


def _ok_payload(content="hi"):
    return {
        "choices": [{"message": {"content": content}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3},
    }


class _FakeSession:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def _backend(session, **kwargs):
    kwargs.setdefault("sleep", lambda _: None)
    return HttpBackend("http://api.example", api_key="k", session=session, **kwargs)


def test_http_backend_sends_wire_format():
    session = _FakeSession([_FakeResponse(200, _ok_payload("out"))])
    response = _backend(session).complete(_request())
    assert response.content == "out"
    assert response.prompt_tokens == 12
    assert response.completion_tokens == 3
    call = session.calls[0]
    assert call["url"] == "http://api.example/v1/chat/completions"
    assert call["json"]["messages"] == [
        {"role": "system", "content": "sys"},
        {"role": "user", "content": "hello"},
    ]
    assert call["json"]["model"] == "m"
    assert call["headers"]["Authorization"] == "Bearer k"


def test_http_backend_retries_429_then_succeeds():
    session = _FakeSession(
        [_FakeResponse(429), _FakeResponse(429), _FakeResponse(200, _ok_payload())]
    )
    slept = []
    backend = _backend(session, sleep=slept.append)
    response = backend.complete(_request())
    assert response.retry_count == 2
    assert len(session.calls) == 3
    assert len(slept) == 2
    assert slept[1] > slept[0]  # exponential growth


def test_http_backend_non_retryable_401():
    session = _FakeSession([_FakeResponse(401)])
    with pytest.raises(BadStatus) as excinfo:
        _backend(session).complete(_request())
    assert excinfo.value.code == 401
    assert len(session.calls) == 1


def test_http_backend_exhausts_retries():
    session = _FakeSession([_FakeResponse(503)] * 3)
    with pytest.raises(TransportError):
        _backend(session, max_retries=2).complete(_request())
    assert len(session.calls) == 3


def test_http_backend_retries_timeouts():
    session = _FakeSession(
        [requests.Timeout("slow"), requests.ConnectionError("down"), _FakeResponse(200, _ok_payload())]
    )
    response = _backend(session).complete(_request())
    assert response.retry_count == 2


def test_http_backend_empty_choice():
    session = _FakeSession([_FakeResponse(200, {"choices": []})])
    with pytest.raises(EmptyChoice):
        _backend(session).complete(_request())
    session = _FakeSession(
        [_FakeResponse(200, {"choices": [{"message": {}, "finish_reason": "stop"}]})]
    )
    with pytest.raises(EmptyChoice):
        _backend(session).complete(_request())


class _SlowBackend:
    def __init__(self):
        self._lock = threading.Lock()
        self.in_flight = 0
        self.peak = 0

    def complete(self, request):
        with self._lock:
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)
        time.sleep(0.005)
        with self._lock:
            self.in_flight -= 1
        from coldrank.gateway import ChatResponse

        return ChatResponse("x", "stop", 1, 1, 0)


def test_gateway_bounds_concurrency_and_logs_tags():
    backend = _SlowBackend()
    gateway = Gateway(backend, max_concurrency=3)
    tags = [f"t{i}" for i in range(24)]
    with ThreadPoolExecutor(max_workers=12) as pool:
        list(pool.map(lambda tag: gateway.complete(_request(tag)), tags))
    assert backend.peak <= 3
    assert gateway.high_water_mark <= 3
    assert sorted(gateway.call_log) == sorted(tags)

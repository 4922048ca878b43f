"""Loopback HTTP service exposing the reward function to external trainers.

POST /v1/reward with {"task_id": ..., "completion": ...} returns
{"reward": 1.0 | -0.1 | -1.0, "pick": N | null}. The task table is immutable
after startup, so concurrent requests are served statelessly.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .scoring import reward
from .trace import parse_final_pick

logger = logging.getLogger(__name__)

DEFAULT_PORT = 7311
REWARD_ROUTE = "/v1/reward"


def evaluate_completion(completion: str, target_index: int) -> tuple[float, int | None]:
    """The reward and parsed pick for a completion, exactly as run-time scoring does."""
    pick = parse_final_pick(completion)
    value = reward(pick, target_index)
    return value, pick if isinstance(pick, int) else None


class _RewardHandler(BaseHTTPRequestHandler):
    targets: dict[str, int] = {}

    def log_message(self, fmt: str, *args) -> None:  # route through logging, quiet stderr
        logger.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:  # noqa: N802 (http.server naming)
        if self.path != REWARD_ROUTE:
            self._send(404, {"error": f"unknown route {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, json.JSONDecodeError):
            self._send(400, {"error": "body must be valid JSON"})
            return
        if not isinstance(payload, dict):
            self._send(400, {"error": "body must be a JSON object"})
            return
        task_id = payload.get("task_id")
        completion = payload.get("completion")
        if not isinstance(task_id, str) or not isinstance(completion, str):
            self._send(400, {"error": "task_id and completion must be strings"})
            return
        target = self.targets.get(task_id)
        if target is None:
            self._send(404, {"error": f"unknown task_id {task_id!r}"})
            return
        value, pick = evaluate_completion(completion, target)
        self._send(200, {"reward": value, "pick": pick})


class RewardService:
    """Owns the HTTP server; loopback-only unless another host is given."""

    def __init__(
        self,
        targets: dict[str, int],
        port: int = DEFAULT_PORT,
        host: str = "127.0.0.1",
    ) -> None:
        handler = type("BoundRewardHandler", (_RewardHandler,), {"targets": dict(targets)})
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}{REWARD_ROUTE}"

    def start(self) -> None:
        """Serve on a daemon thread; use serve_forever() to block instead."""
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "RewardService":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()

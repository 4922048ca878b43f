"""HTTP client for the re-ranking reward endpoint."""

from __future__ import annotations

import requests

from .errors import BridgeError, RewardServiceUnreachable


class RewardClient:
    """POSTs (task_id, completion) pairs and returns the scalar reward."""

    def __init__(self, endpoint: str, timeout: float = 10.0, session=None) -> None:
        self._endpoint = endpoint
        self._timeout = timeout
        self._session = session or requests.Session()

    def score(self, task_id: str, completion: str) -> float:
        try:
            response = self._session.post(
                self._endpoint,
                json={"task_id": task_id, "completion": completion},
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise RewardServiceUnreachable(f"reward endpoint {self._endpoint}: {exc}") from exc
        if response.status_code != 200:
            raise BridgeError(
                f"reward endpoint returned {response.status_code}: {response.text[:200]}"
            )
        return float(response.json()["reward"])

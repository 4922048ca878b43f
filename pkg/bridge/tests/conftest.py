"""Fixture spawning the primary's reward service as a subprocess."""

from __future__ import annotations

import json
import subprocess
import sys
import time

import pytest
import requests

from corpusgen import write_tasks_file


@pytest.fixture(scope="session")
def reward_server(tmp_path_factory):
    """The primary's serve-reward subcommand running in a subprocess.

    Yields (endpoint_url, targets). The bridge talks to it over HTTP only.
    """
    workdir = tmp_path_factory.mktemp("reward_server")
    targets = {f"u{i:03d}/cold": (i * 7) % 50 + 1 for i in range(32)}
    write_tasks_file(workdir / "tasks.jsonl", targets)

    process = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "coldrank.cli",
            "serve-reward",
            "--output-dir",
            str(workdir),
            "--port",
            "0",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    line = process.stdout.readline()
    if not line:
        raise RuntimeError(f"reward service failed to start: {process.stderr.read()}")
    port = json.loads(line)["port"]
    endpoint = f"http://127.0.0.1:{port}/v1/reward"

    deadline = time.monotonic() + 10
    while True:
        try:
            requests.post(endpoint, json={"task_id": "nope", "completion": ""}, timeout=1)
            break
        except requests.RequestException:
            if time.monotonic() > deadline:
                process.kill()
                raise RuntimeError("reward service never became reachable")
            time.sleep(0.05)

    yield endpoint, targets

    process.terminate()
    try:
        process.wait(timeout=5)
    except subprocess.TimeoutExpired:
        process.kill()

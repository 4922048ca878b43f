"""Readers for the exported training corpora (sft.jsonl / grpo.jsonl)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyCorpus


@dataclass(frozen=True)
class SftRecord:
    prompt: str
    completion: str
    strategy: str
    task_id: str


@dataclass(frozen=True)
class GrpoRecord:
    prompt: str
    task_id: str
    strategy: str
    replicate: int


def _read_jsonl(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise EmptyCorpus(f"corpus file not found: {path}")
    rows = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    if not rows:
        raise EmptyCorpus(f"corpus file is empty: {path}")
    return rows


def load_sft(path: str | Path) -> list[SftRecord]:
    return [
        SftRecord(
            prompt=row["prompt"],
            completion=row["completion"],
            strategy=row["strategy"],
            task_id=row["task_id"],
        )
        for row in _read_jsonl(path)
    ]


def load_grpo(path: str | Path) -> list[GrpoRecord]:
    return [
        GrpoRecord(
            prompt=row["prompt"],
            task_id=row["task_id"],
            strategy=row["strategy"],
            replicate=row["replicate"],
        )
        for row in _read_jsonl(path)
    ]

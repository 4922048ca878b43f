"""Training-corpus curation: SFT examples and oversampled GRPO prompts."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MissingFile
from .strategies import StrategyKind, StrategyOutcome

logger = logging.getLogger(__name__)

SFT_FIELDS = ("prompt", "completion", "strategy", "task_id")
GRPO_FIELDS = ("prompt", "task_id", "strategy", "replicate")


@dataclass(frozen=True)
class SftExample:
    prompt: str
    completion: str
    strategy: str
    task_id: str


@dataclass(frozen=True)
class GrpoPrompt:
    prompt: str
    task_id: str
    strategy: str
    replicate_ordinal: int


def collect_sft(outcomes: Iterable[StrategyOutcome]) -> list[SftExample]:
    """Keep only fully successful trajectories, interleaved across strategies.

    Round-robin interleaving avoids long same-strategy runs in the corpus.
    An empty result is a warning, not an error.
    """
    queues: dict[StrategyKind, list[SftExample]] = {}
    for outcome in outcomes:
        if outcome.reward != 1.0:
            continue
        queues.setdefault(outcome.strategy, []).append(
            SftExample(
                prompt=outcome.prompt_text,
                completion=outcome.completion_text,
                strategy=outcome.strategy.value,
                task_id=outcome.task_id,
            )
        )
    if not queues:
        logger.warning("no successful outcomes: SFT corpus is empty")
        return []

    ordered = [queues[kind] for kind in StrategyKind if kind in queues]
    examples: list[SftExample] = []
    round_index = 0
    while any(round_index < len(queue) for queue in ordered):
        for queue in ordered:
            if round_index < len(queue):
                examples.append(queue[round_index])
        round_index += 1
    return examples


def build_grpo_prompts(
    outcomes: Iterable[StrategyOutcome],
    oversample_factor: int,
    seed: int = 0,
) -> list[GrpoPrompt]:
    """One prompt per task, with successful tasks replicated oversample_factor times.

    The result is shuffled with a seeded generator so replication does not
    leave long identical runs in the training stream.
    """
    if oversample_factor < 1:
        raise ValueError(f"oversample_factor must be >= 1, got {oversample_factor}")
    prompts: list[GrpoPrompt] = []
    for outcome in outcomes:
        copies = oversample_factor if outcome.reward == 1.0 else 1
        for ordinal in range(1, copies + 1):
            prompts.append(
                GrpoPrompt(
                    prompt=outcome.prompt_text,
                    task_id=outcome.task_id,
                    strategy=outcome.strategy.value,
                    replicate_ordinal=ordinal,
                )
            )
    random.Random(seed).shuffle(prompts)
    return prompts


def _record_payload(record: SftExample | GrpoPrompt, kind: str) -> dict:
    if kind == "sft":
        assert isinstance(record, SftExample)
        return {
            "prompt": record.prompt,
            "completion": record.completion,
            "strategy": record.strategy,
            "task_id": record.task_id,
        }
    assert isinstance(record, GrpoPrompt)
    return {
        "prompt": record.prompt,
        "task_id": record.task_id,
        "strategy": record.strategy,
        "replicate": record.replicate_ordinal,
    }


def export_jsonl(
    records: Sequence[SftExample] | Sequence[GrpoPrompt],
    path: str | Path,
    kind: str,
) -> int:
    """Write records as UTF-8 JSONL with stable field order; returns the count."""
    if kind not in ("sft", "grpo"):
        raise ValueError(f"kind must be 'sft' or 'grpo', got {kind!r}")
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(_record_payload(record, kind), ensure_ascii=False) + "\n")
    return len(records)


def _read_jsonl(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"corpus file not found: {path}")
    rows = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def load_sft_jsonl(path: str | Path) -> list[SftExample]:
    return [
        SftExample(
            prompt=row["prompt"],
            completion=row["completion"],
            strategy=row["strategy"],
            task_id=row["task_id"],
        )
        for row in _read_jsonl(path)
    ]


def load_grpo_jsonl(path: str | Path) -> list[GrpoPrompt]:
    return [
        GrpoPrompt(
            prompt=row["prompt"],
            task_id=row["task_id"],
            strategy=row["strategy"],
            replicate_ordinal=row["replicate"],
        )
        for row in _read_jsonl(path)
    ]

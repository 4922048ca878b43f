"""Assembly of 50-candidate re-ranking tasks from a cold-start split.

Each task presents the top 40 warm items from a baseline ranker plus 10
cold items (the target among them in cold mode), aliased by slot index 1..50
and shuffled with a per-user seeded generator so runs are reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import json
import random
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .catalog import (
    COLD,
    MODES,
    Catalog,
    ColdStartSplit,
    Interaction,
    format_timestamp,
    parse_timestamp,
)
from .errors import (
    InsufficientColdCandidates,
    InsufficientWarmCandidates,
    MalformedRow,
    MissingFile,
    UserNotInMode,
)

N_CANDIDATES = 50
N_WARM = 40
N_COLD = 10

BASELINE_COLUMNS = ["user_id", "item_id", "score"]


@dataclass(frozen=True)
class CandidateSlot:
    """One aliased candidate as presented to the model."""

    index: int
    item_id: str
    title: str
    launch_date: date
    genres: tuple[str, ...]


@dataclass(frozen=True)
class RerankTask:
    task_id: str
    user_id: str
    mode: str
    seed: int
    history: tuple[Interaction, ...]
    candidates: tuple[CandidateSlot, ...]
    target_index: int
    target_discovery: bool

    @property
    def target_item_id(self) -> str:
        return self.candidates[self.target_index - 1].item_id


class Ranker(Protocol):
    def scores(self, user_id: str) -> dict[str, float]:
        """Baseline relevance score per item for this user."""


class PopularityRanker:
    """Global warm-item play counts over the split's per-user histories.

    Counting post-split histories keeps held-out targets out of the baseline.
    Warm items never played score 0 and stay rankable.
    """

    def __init__(self, split: ColdStartSplit) -> None:
        counts = {item_id: 0 for item_id in split.warm_items}
        for events in split.per_user_history.values():
            for event in events:
                counts[event.item_id] = counts.get(event.item_id, 0) + 1
        self._counts = {item: float(count) for item, count in counts.items()}

    def scores(self, user_id: str) -> dict[str, float]:
        return self._counts


class FileRanker:
    """Precomputed per-user baseline scores loaded from baseline_scores.csv."""

    def __init__(self, per_user: dict[str, dict[str, float]]) -> None:
        self._per_user = per_user

    def scores(self, user_id: str) -> dict[str, float]:
        return self._per_user.get(user_id, {})


def load_baseline_scores(path: str | Path) -> FileRanker:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"baseline score file not found: {path}")
    per_user: dict[str, dict[str, float]] = {}
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != BASELINE_COLUMNS:
            raise MalformedRow(str(path), 1, f"expected header {BASELINE_COLUMNS}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(str(path), line_no, f"expected 3 fields, got {len(row)}")
            user_id, item_id, score_raw = row
            try:
                score = float(score_raw)
            except ValueError as exc:
                raise MalformedRow(str(path), line_no, f"bad score {score_raw!r}") from exc
            per_user.setdefault(user_id, {})[item_id] = score
    return FileRanker(per_user)


def derive_task_seed(global_seed: int, user_id: str) -> int:
    """Stable 64-bit per-user seed; independent of process hash randomization."""
    digest = hashlib.sha256(f"{global_seed}:{user_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def truncate_history(history: Sequence[Interaction], max_len: int) -> tuple[Interaction, ...]:
    """Keep the most recent max_len interactions, order preserved."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    return tuple(history[-max_len:])


def rank_warm_candidates(
    user_id: str,
    split: ColdStartSplit,
    catalog: Catalog,
    ranker: Ranker,
) -> list[str]:
    """Warm items the user has not played, ordered by baseline score.

    Ties break by item_id ascending. Raises when fewer than N_WARM remain.
    """
    seen = {event.item_id for event in split.per_user_history.get(user_id, ())}
    scores = ranker.scores(user_id)
    eligible = [
        item_id
        for item_id in scores
        if item_id in split.warm_items and item_id not in seen
    ]
    eligible.sort(key=lambda item_id: (-scores[item_id], item_id))
    if len(eligible) < N_WARM:
        raise InsufficientWarmCandidates(len(eligible), N_WARM)
    return eligible


@dataclass(frozen=True)
class TaskConfig:
    max_history_len: int = 50
    history_multiplier: int = 1  # 2 for the extended-history strategy


def _slot(index: int, item_id: str, catalog: Catalog) -> CandidateSlot:
    item = catalog[item_id]
    return CandidateSlot(
        index=index,
        item_id=item_id,
        title=item.title,
        launch_date=item.launch_date,
        genres=item.genres,
    )


def assemble_task(
    user_id: str,
    split: ColdStartSplit,
    catalog: Catalog,
    config: TaskConfig,
    seed: int,
    ranker: Ranker,
    mode: str = COLD,
) -> RerankTask:
    """Build one user's re-ranking task for the requested mode.

    Cold mode: top-40 warm plus 9 sampled cold plus the cold target.
    Warm mode: the warm target is forced into the 40 warm slots (replacing
    rank 40 when absent from the top 40) plus 10 sampled cold items.
    All 50 are shuffled with the task's seeded generator before aliasing.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    target = split.targets.get(user_id)
    if target is None or target.mode != mode:
        raise UserNotInMode(user_id, mode)

    warm_ranked = rank_warm_candidates(user_id, split, catalog, ranker)
    rng = random.Random(seed)

    if mode == COLD:
        cold_pool = sorted(split.cold_items - {target.item_id})
        if len(cold_pool) < N_COLD - 1:
            raise InsufficientColdCandidates(len(cold_pool) + 1, N_COLD)
        warm_part = warm_ranked[:N_WARM]
        cold_part = rng.sample(cold_pool, N_COLD - 1) + [target.item_id]
    else:
        cold_pool = sorted(split.cold_items)
        if len(cold_pool) < N_COLD:
            raise InsufficientColdCandidates(len(cold_pool), N_COLD)
        warm_part = warm_ranked[:N_WARM]
        if target.item_id not in warm_part:
            warm_part = warm_part[: N_WARM - 1] + [target.item_id]
        cold_part = rng.sample(cold_pool, N_COLD)

    item_ids = warm_part + cold_part
    rng.shuffle(item_ids)

    history = truncate_history(
        split.per_user_history.get(user_id, ()),
        config.max_history_len * config.history_multiplier,
    )
    return RerankTask(
        task_id=f"{user_id}/{mode}",
        user_id=user_id,
        mode=mode,
        seed=seed,
        history=history,
        candidates=tuple(_slot(i + 1, item_id, catalog) for i, item_id in enumerate(item_ids)),
        target_index=item_ids.index(target.item_id) + 1,
        target_discovery=target.discovery,
    )


def build_tasks(
    split: ColdStartSplit,
    catalog: Catalog,
    config: TaskConfig,
    global_seed: int,
    ranker: Ranker,
    mode: str = COLD,
) -> list[RerankTask]:
    """Tasks for every user in the mode, ordered by user_id."""
    return [
        assemble_task(
            user_id,
            split,
            catalog,
            config,
            derive_task_seed(global_seed, user_id),
            ranker,
            mode,
        )
        for user_id in split.users_in_mode(mode)
    ]


def task_to_payload(task: RerankTask) -> dict:
    return {
        "task_id": task.task_id,
        "user_id": task.user_id,
        "mode": task.mode,
        "seed": task.seed,
        "history": [
            {
                "item_id": e.item_id,
                "timestamp": format_timestamp(e.timestamp),
                "discovery": int(e.discovery),
            }
            for e in task.history
        ],
        "candidates": [
            {
                "index": slot.index,
                "item_id": slot.item_id,
                "title": slot.title,
                "launch_date": slot.launch_date.isoformat(),
                "genres": list(slot.genres),
            }
            for slot in task.candidates
        ],
        "target_index": task.target_index,
        "target_discovery": int(task.target_discovery),
    }


def task_from_payload(payload: dict) -> RerankTask:
    return RerankTask(
        task_id=payload["task_id"],
        user_id=payload["user_id"],
        mode=payload["mode"],
        seed=payload["seed"],
        history=tuple(
            Interaction(
                user_id=payload["user_id"],
                item_id=e["item_id"],
                timestamp=parse_timestamp(e["timestamp"]),
                discovery=bool(e["discovery"]),
            )
            for e in payload["history"]
        ),
        candidates=tuple(
            CandidateSlot(
                index=c["index"],
                item_id=c["item_id"],
                title=c["title"],
                launch_date=date.fromisoformat(c["launch_date"]),
                genres=tuple(c["genres"]),
            )
            for c in payload["candidates"]
        ),
        target_index=payload["target_index"],
        target_discovery=bool(payload.get("target_discovery", 0)),
    )


def write_tasks_jsonl(tasks: Iterable[RerankTask], path: str | Path) -> int:
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for task in tasks:
            handle.write(json.dumps(task_to_payload(task), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_tasks_jsonl(path: str | Path) -> list[RerankTask]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"task file not found: {path}")
    tasks = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                tasks.append(task_from_payload(json.loads(line)))
    return tasks

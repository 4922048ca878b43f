"""Catalog and interaction-log loading plus the cold-start split.

Items are cold when their launch date falls strictly after the configured
cutoff. Each user's final interaction becomes their target; the rest of
their warm plays form the history. Cold plays never survive into histories.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path

from .errors import (
    DuplicateItemId,
    EmptyLog,
    MalformedRow,
    MissingFile,
    NoWarmItems,
    UnknownItemId,
)

CATALOG_COLUMNS = ["item_id", "title", "launch_date", "genres", "cast", "directors"]
INTERACTION_COLUMNS = ["user_id", "item_id", "timestamp", "discovery"]

COLD = "cold"
WARM = "warm"
MODES = (COLD, WARM)


@dataclass(frozen=True)
class Item:
    item_id: str
    title: str
    launch_date: date
    genres: tuple[str, ...]
    cast: tuple[str, ...]
    directors: tuple[str, ...]


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    timestamp: datetime
    discovery: bool


@dataclass(frozen=True)
class Target:
    """A user's held-out final interaction."""

    item_id: str
    timestamp: datetime
    discovery: bool
    mode: str  # "cold" when the target item is cold, "warm" otherwise


@dataclass(frozen=True)
class ColdStartSplit:
    cutoff_date: date
    warm_items: frozenset[str]
    cold_items: frozenset[str]
    per_user_history: dict[str, tuple[Interaction, ...]]
    targets: dict[str, Target]
    dropped_cold_interactions: int = 0
    dropped_tied_interactions: int = 0

    def users_in_mode(self, mode: str) -> list[str]:
        """User ids whose target is in the given mode, sorted for determinism."""
        return sorted(u for u, t in self.targets.items() if t.mode == mode)


Catalog = dict[str, Item]
InteractionLog = dict[str, tuple[Interaction, ...]]


def _split_list_field(raw: str) -> tuple[str, ...]:
    if not raw:
        return ()
    return tuple(part for part in raw.split("|") if part)


def parse_timestamp(raw: str) -> datetime:
    """Parse an ISO-8601 instant with a Z suffix into an aware UTC datetime."""
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def load_catalog(path: str | Path) -> Catalog:
    """Load items.csv into a map item_id -> Item.

    Raises MissingFile, MalformedRow (bad header, bad date, wrong field
    count) or DuplicateItemId.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"catalog file not found: {path}")

    catalog: Catalog = {}
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != CATALOG_COLUMNS:
            raise MalformedRow(str(path), 1, f"expected header {CATALOG_COLUMNS}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CATALOG_COLUMNS):
                raise MalformedRow(str(path), line_no, f"expected {len(CATALOG_COLUMNS)} fields, got {len(row)}")
            item_id, title, launch_raw, genres, cast, directors = row
            if not item_id:
                raise MalformedRow(str(path), line_no, "empty item_id")
            try:
                launch = date.fromisoformat(launch_raw)
            except ValueError as exc:
                raise MalformedRow(str(path), line_no, f"bad launch_date {launch_raw!r}") from exc
            if item_id in catalog:
                raise DuplicateItemId(item_id)
            catalog[item_id] = Item(
                item_id=item_id,
                title=title,
                launch_date=launch,
                genres=_split_list_field(genres),
                cast=_split_list_field(cast),
                directors=_split_list_field(directors),
            )
    return catalog


def load_interactions(path: str | Path, catalog: Catalog) -> InteractionLog:
    """Load interactions.csv, grouped per user and sorted ascending by time.

    The sort is stable, so equal timestamps keep their file order. Raises
    MissingFile, MalformedRow or UnknownItemId.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"interaction file not found: {path}")

    rows: dict[str, list[Interaction]] = {}
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != INTERACTION_COLUMNS:
            raise MalformedRow(str(path), 1, f"expected header {INTERACTION_COLUMNS}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(INTERACTION_COLUMNS):
                raise MalformedRow(str(path), line_no, f"expected {len(INTERACTION_COLUMNS)} fields, got {len(row)}")
            user_id, item_id, ts_raw, discovery_raw = row
            if not user_id:
                raise MalformedRow(str(path), line_no, "empty user_id")
            if item_id not in catalog:
                raise UnknownItemId(item_id)
            try:
                ts = parse_timestamp(ts_raw)
            except ValueError as exc:
                raise MalformedRow(str(path), line_no, f"bad timestamp {ts_raw!r}") from exc
            if discovery_raw not in ("0", "1"):
                raise MalformedRow(str(path), line_no, f"discovery must be 0 or 1, got {discovery_raw!r}")
            rows.setdefault(user_id, []).append(
                Interaction(user_id=user_id, item_id=item_id, timestamp=ts, discovery=discovery_raw == "1")
            )

    log: InteractionLog = {}
    for user_id, events in rows.items():
        events.sort(key=lambda e: e.timestamp)  # stable: file order kept on ties
        log[user_id] = tuple(events)
    return log


def split_cold_start(catalog: Catalog, log: InteractionLog, cutoff_date: date) -> ColdStartSplit:
    """Partition items by launch date and hold out each user's final play.

    Each user's final interaction becomes their target. Users whose target
    item is cold go to the cold-mode set, the rest to the warm-mode set.
    Non-final cold plays are scrubbed from histories and counted, as are
    plays sharing the target's timestamp (the target must be strictly
    latest). Pure function: identical inputs give identical outputs.
    """
    if not log or all(not events for events in log.values()):
        raise EmptyLog("interaction log has no events")

    warm = frozenset(i for i, item in catalog.items() if item.launch_date <= cutoff_date)
    cold = frozenset(catalog) - warm
    if not warm:
        raise NoWarmItems(f"no item launched on or before {cutoff_date.isoformat()}")

    histories: dict[str, tuple[Interaction, ...]] = {}
    targets: dict[str, Target] = {}
    dropped_cold = 0
    dropped_tied = 0

    for user_id, events in log.items():
        if not events:
            continue
        final = events[-1]
        kept: list[Interaction] = []
        for event in events[:-1]:
            if event.item_id in cold:
                dropped_cold += 1
            elif event.timestamp >= final.timestamp:
                dropped_tied += 1
            else:
                kept.append(event)
        histories[user_id] = tuple(kept)
        targets[user_id] = Target(
            item_id=final.item_id,
            timestamp=final.timestamp,
            discovery=final.discovery,
            mode=COLD if final.item_id in cold else WARM,
        )

    return ColdStartSplit(
        cutoff_date=cutoff_date,
        warm_items=warm,
        cold_items=cold,
        per_user_history=histories,
        targets=targets,
        dropped_cold_interactions=dropped_cold,
        dropped_tied_interactions=dropped_tied,
    )

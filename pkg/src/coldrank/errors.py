"""Exception types shared across the pipeline."""

from __future__ import annotations


class ColdRankError(Exception):
    """Base class for all pipeline errors."""


# --- catalog ---------------------------------------------------------------


class MissingFile(ColdRankError):
    pass


class MalformedRow(ColdRankError):
    def __init__(self, path: str, line_no: int, reason: str) -> None:
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class DuplicateItemId(ColdRankError):
    def __init__(self, item_id: str) -> None:
        super().__init__(f"duplicate item_id {item_id!r}")
        self.item_id = item_id


class UnknownItemId(ColdRankError):
    def __init__(self, item_id: str) -> None:
        super().__init__(f"interaction references unknown item_id {item_id!r}")
        self.item_id = item_id


class NoWarmItems(ColdRankError):
    pass


class EmptyLog(ColdRankError):
    pass


# --- taskgen ---------------------------------------------------------------


class InsufficientWarmCandidates(ColdRankError):
    def __init__(self, available: int, needed: int) -> None:
        super().__init__(f"only {available} warm candidates available, need {needed}")
        self.available = available
        self.needed = needed


class InsufficientColdCandidates(ColdRankError):
    def __init__(self, available: int, needed: int) -> None:
        super().__init__(f"only {available} cold candidates available, need {needed}")
        self.available = available
        self.needed = needed


class UserNotInMode(ColdRankError):
    def __init__(self, user_id: str, mode: str) -> None:
        super().__init__(f"user {user_id!r} has no target in mode {mode!r}")
        self.user_id = user_id
        self.mode = mode


# --- gateway ---------------------------------------------------------------


class TransportError(ColdRankError):
    pass


class BadStatus(ColdRankError):
    def __init__(self, code: int, body: str = "") -> None:
        super().__init__(f"non-retryable HTTP status {code}")
        self.code = code
        self.body = body


class EmptyChoice(ColdRankError):
    pass


class UnknownTag(ColdRankError):
    def __init__(self, tag: str) -> None:
        super().__init__(f"mock script has no response for tag {tag!r} and no default")
        self.tag = tag


# --- strategies ------------------------------------------------------------


class MissingTemplate(ColdRankError):
    def __init__(self, strategy: str, filename: str) -> None:
        super().__init__(f"strategy {strategy} needs template {filename!r}")
        self.strategy = strategy
        self.filename = filename


class ContextOverflow(ColdRankError):
    def __init__(self, size: int, budget: int) -> None:
        super().__init__(f"rendered prompt is {size} chars, budget is {budget}")
        self.size = size
        self.budget = budget


# --- scoring ---------------------------------------------------------------


class NegativeWeight(ColdRankError):
    pass


class DimensionMismatch(ColdRankError):
    pass


class EmptyEvalSet(ColdRankError):
    pass


class ZeroBaseline(ColdRankError):
    pass


# --- cli / config ----------------------------------------------------------


class ConfigError(ColdRankError):
    pass

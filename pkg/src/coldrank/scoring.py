"""Deterministic score aggregation, the reward function, and eval metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyEvalSet, NegativeWeight, ZeroBaseline
from .trace import ImportanceWeights, MatchMatrix, ParseFailure

if TYPE_CHECKING:
    from .strategies import StrategyOutcome
    from .taskgen import RerankTask

REWARD_CORRECT = 1.0
REWARD_INCORRECT = -0.1
REWARD_PARSE_FAILURE = -1.0

ANYPLAY = "anyplay"
DISCOVERY = "discovery"


@dataclass(frozen=True)
class NormalizedWeights:
    values: tuple[float, ...]
    degenerate: bool  # all-zero raw weights were replaced by a uniform split


@dataclass(frozen=True)
class ScoreVector:
    """Aggregated relevance scores keyed by candidate index."""

    overall: dict[int, float]


@dataclass(frozen=True)
class EvalReport:
    strategy: str
    n_tasks: int
    recall_at_1_anyplay: float
    recall_at_1_discovery: float | None
    n_discovery_tasks: int
    parse_failure_rate: float
    per_strategy: dict[str, dict[str, float]]


def normalize_weights(weights: ImportanceWeights | Sequence[float]) -> NormalizedWeights:
    """Scale raw importance weights to sum to 1; uniform fallback when all zero."""
    raw = tuple(weights.raw) if isinstance(weights, ImportanceWeights) else tuple(weights)
    if not raw:
        raise DimensionMismatch("cannot normalize an empty weight list")
    if any(w < 0 for w in raw):
        raise NegativeWeight(f"importance weights must be >= 0, got {raw}")
    total = sum(raw)
    if total == 0:
        return NormalizedWeights(values=tuple(1.0 / len(raw) for _ in raw), degenerate=True)
    return NormalizedWeights(values=tuple(w / total for w in raw), degenerate=False)


def aggregate(matrix: MatchMatrix, weights: ImportanceWeights) -> ScoreVector:
    """Weighted sum of match scores per candidate: overall(c) = sum_p w_p * m[p][c]."""
    if len(weights.raw) != matrix.n_paths:
        raise DimensionMismatch(
            f"{len(weights.raw)} weights for {matrix.n_paths} reasoning paths"
        )
    normalized = normalize_weights(weights)
    acc = np.zeros(len(matrix.candidate_index_map), dtype=np.float64)
    for w, row in zip(normalized.values, matrix.scores):
        acc += w * np.asarray(row, dtype=np.float64)
    return ScoreVector(overall={cand: float(acc[col]) for col, cand in enumerate(matrix.candidate_index_map)})


def rank_candidates(scores: ScoreVector, task: "RerankTask") -> list[int]:
    """Full candidate permutation: score descending, ties and unscored by index.

    Unscored candidates always rank below every scored one.
    """
    all_indices = [slot.index for slot in task.candidates]
    scored = sorted(
        (idx for idx in all_indices if idx in scores.overall),
        key=lambda idx: (-scores.overall[idx], idx),
    )
    unscored = sorted(idx for idx in all_indices if idx not in scores.overall)
    return scored + unscored


def reward(final_pick: int | ParseFailure | None, target_index: int) -> float:
    """Reward for a final recommendation: 1 correct, -0.1 wrong, -1 unparseable."""
    if not 1 <= target_index <= 50:
        raise ValueError(f"target_index must be in [1, 50], got {target_index}")
    if final_pick is None or isinstance(final_pick, ParseFailure):
        return REWARD_PARSE_FAILURE
    if final_pick == target_index:
        return REWARD_CORRECT
    return REWARD_INCORRECT


def recall_at_1(outcomes: Iterable["StrategyOutcome"], mode: str = ANYPLAY) -> float:
    """Fraction of outcomes with reward exactly 1.0 over the selected mode.

    Discovery mode restricts to tasks whose target interaction carries the
    discovery flag.
    """
    if mode not in (ANYPLAY, DISCOVERY):
        raise ValueError(f"mode must be {ANYPLAY!r} or {DISCOVERY!r}, got {mode!r}")
    selected = [o for o in outcomes if mode == ANYPLAY or o.discovery]
    if not selected:
        raise EmptyEvalSet(f"no outcomes in mode {mode!r}")
    correct = sum(1 for o in selected if o.reward == REWARD_CORRECT)
    return correct / len(selected)


def relative_performance(metric: float, baseline_metric: float) -> float:
    """Signed percentage change versus a baseline, rounded to 2 decimals."""
    if baseline_metric <= 0:
        raise ZeroBaseline(f"baseline must be > 0, got {baseline_metric}")
    return round(100.0 * (metric - baseline_metric) / baseline_metric, 2)


def _rates(outcomes: Sequence["StrategyOutcome"]) -> dict[str, float]:
    n = len(outcomes)
    discovery = [o for o in outcomes if o.discovery]
    stats: dict[str, float] = {
        "n_tasks": n,
        "anyplay_recall1": sum(1 for o in outcomes if o.reward == REWARD_CORRECT) / n,
        "parse_failure_rate": sum(1 for o in outcomes if o.parse_failure is not None) / n,
        "n_discovery_tasks": len(discovery),
    }
    if discovery:
        stats["discovery_recall1"] = (
            sum(1 for o in discovery if o.reward == REWARD_CORRECT) / len(discovery)
        )
    return stats


def build_eval_report(outcomes: Sequence["StrategyOutcome"]) -> EvalReport:
    """Summarize outcomes into the evaluation report structure."""
    if not outcomes:
        raise EmptyEvalSet("no outcomes to evaluate")
    strategies = sorted({o.strategy.value for o in outcomes})
    per_strategy = {
        name: _rates([o for o in outcomes if o.strategy.value == name]) for name in strategies
    }
    total = _rates(outcomes)
    return EvalReport(
        strategy=strategies[0] if len(strategies) == 1 else "mixed",
        n_tasks=int(total["n_tasks"]),
        recall_at_1_anyplay=total["anyplay_recall1"],
        recall_at_1_discovery=total.get("discovery_recall1"),
        n_discovery_tasks=int(total["n_discovery_tasks"]),
        parse_failure_rate=total["parse_failure_rate"],
        per_strategy=per_strategy,
    )


def report_payload(
    report: EvalReport,
    relative_to: dict[str, float] | None = None,
) -> dict:
    """The report.json object, with fields in stable order."""
    payload: dict = {
        "strategy": report.strategy,
        "n_tasks": report.n_tasks,
        "anyplay_recall1": report.recall_at_1_anyplay,
        "discovery_recall1": report.recall_at_1_discovery,
        "n_discovery_tasks": report.n_discovery_tasks,
        "parse_failure_rate": report.parse_failure_rate,
        "per_strategy": report.per_strategy,
    }
    if relative_to is not None:
        payload["relative_to"] = relative_to
    return payload

"""Prompt construction and call orchestration for the five strategies.

Single-call strategies (direct pick, guided two-section reasoning, and its
faster long-history variant, plus structural reasoning) issue exactly one
request per task. Soft self-consistency issues k sampling calls and one
summarization call that alone decides the final pick; there is no voting.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from . import scoring
from .catalog import Catalog
from .errors import ContextOverflow, MissingFile, MissingTemplate
from .gateway import ChatBackend, ChatRequest
from .taskgen import RerankTask, truncate_history
from .trace import (
    FailureReason,
    ParsedTrace,
    ParseFailure,
    parse_final_pick,
    parse_structural,
    plain_trace,
    ssc_trace,
)

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = "You are a film and series recommendation assistant for a streaming catalog."

HISTORY_PLACEHOLDER = "{{history}}"
CANDIDATES_PLACEHOLDER = "{{candidates}}"
PATHS_PLACEHOLDER = "{{paths}}"


class StrategyKind(enum.Enum):
    DIRECT_REC = "direct_rec"
    BASE_REASON = "base_reason"
    FAST_REASON = "fast_reason"
    STRUCTURAL = "structural"
    SOFT_SELF_CONSISTENCY = "ssc"


TEMPLATE_FILES: dict[StrategyKind, tuple[str, ...]] = {
    StrategyKind.DIRECT_REC: ("direct_rec.txt",),
    StrategyKind.BASE_REASON: ("base_reason.txt",),
    StrategyKind.FAST_REASON: ("fast_reason.txt",),
    StrategyKind.STRUCTURAL: ("structural.txt",),
    StrategyKind.SOFT_SELF_CONSISTENCY: ("ssc_sample.txt", "ssc_summarize.txt"),
}

ALL_TEMPLATE_NAMES = tuple(sorted({name for names in TEMPLATE_FILES.values() for name in names}))


@dataclass(frozen=True)
class TemplateSet:
    """Prompt templates plus a content hash used as the template version."""

    texts: dict[str, str]
    version: str

    @classmethod
    def from_texts(cls, texts: dict[str, str]) -> "TemplateSet":
        digest = hashlib.sha256()
        for name in sorted(texts):
            digest.update(name.encode("utf-8"))
            digest.update(texts[name].encode("utf-8"))
        return cls(texts=dict(texts), version=digest.hexdigest()[:12])

    @classmethod
    def from_dir(cls, path: str | Path) -> "TemplateSet":
        path = Path(path)
        if not path.is_dir():
            raise MissingFile(f"template directory not found: {path}")
        texts = {
            name: (path / name).read_text(encoding="utf-8")
            for name in ALL_TEMPLATE_NAMES
            if (path / name).exists()
        }
        return cls.from_texts(texts)

    @classmethod
    def packaged(cls) -> "TemplateSet":
        root = resources.files("coldrank") / "templates"
        texts = {name: (root / name).read_text(encoding="utf-8") for name in ALL_TEMPLATE_NAMES}
        return cls.from_texts(texts)

    def text_for(self, strategy: StrategyKind, name: str) -> str:
        if name not in self.texts:
            raise MissingTemplate(strategy.value, name)
        return self.texts[name]


@dataclass(frozen=True)
class StrategyConfig:
    model: str = "mock-model"
    max_history_len: int = 50
    ssc_k: int = 5
    max_tokens: int = 2048
    temperature_single: float = 0.0
    temperature_ssc_sample: float = 0.8
    temperature_ssc_summary: float = 0.0
    max_prompt_chars: int = 200_000


@dataclass(frozen=True)
class PlannedCall:
    tag: str
    temperature: float
    text: str
    deferred: bool = False  # text still holds {{paths}}, filled at run time


@dataclass(frozen=True)
class PromptBundle:
    strategy: StrategyKind
    calls: tuple[PlannedCall, ...]
    rendered_context: str


@dataclass(frozen=True)
class StrategyOutcome:
    task_id: str
    strategy: StrategyKind
    raw_texts: tuple[str, ...]
    trace: ParsedTrace | None
    final_pick: int | None
    parse_failure: ParseFailure | None
    reward: float
    target_index: int
    discovery: bool
    prompt_text: str
    template_version: str
    harness_ranking: tuple[int, ...] | None = None

    @property
    def completion_text(self) -> str:
        """The model text whose parse decides the reward."""
        return self.raw_texts[-1]


def history_budget(strategy: StrategyKind, max_history_len: int) -> int:
    """Events rendered into the prompt; the fast variant doubles the budget."""
    if strategy is StrategyKind.FAST_REASON:
        return max_history_len * 2
    return max_history_len


def render_history(task: RerankTask, catalog: Catalog | None, limit: int) -> str:
    events = truncate_history(task.history, limit) if task.history else ()
    if not events:
        return "(no prior viewing history)"
    lines = []
    for event in events:
        item = catalog.get(event.item_id) if catalog else None
        label = item.title if item else event.item_id
        suffix = f" [genres: {', '.join(item.genres)}]" if item and item.genres else ""
        lines.append(f"- {event.timestamp.date().isoformat()} {label}{suffix}")
    return "\n".join(lines)


def render_candidates(task: RerankTask) -> str:
    lines = []
    for slot in task.candidates:
        genres = ", ".join(slot.genres) if slot.genres else "unknown"
        lines.append(
            f"{slot.index}. {slot.title} (launched {slot.launch_date.isoformat()}; genres: {genres})"
        )
    return "\n".join(lines)


def _fill(template: str, history: str, candidates: str) -> str:
    return template.replace(HISTORY_PLACEHOLDER, history).replace(
        CANDIDATES_PLACEHOLDER, candidates
    )


def _check_rendered(text: str, config: StrategyConfig, allow_paths: bool = False) -> None:
    probe = text.replace(PATHS_PLACEHOLDER, "") if allow_paths else text
    if "{{" in probe:
        start = probe.index("{{")
        raise ValueError(f"unresolved placeholder near {probe[start : start + 24]!r}")
    if len(text) > config.max_prompt_chars:
        raise ContextOverflow(len(text), config.max_prompt_chars)


def build_prompt(
    task: RerankTask,
    strategy: StrategyKind,
    template_set: TemplateSet,
    config: StrategyConfig,
    catalog: Catalog | None = None,
) -> PromptBundle:
    """Render the strategy's call plan for one task.

    Soft self-consistency plans k sampling calls plus one summarization call
    whose {{paths}} slot is filled only once the sampled texts exist.
    """
    history = render_history(task, catalog, history_budget(strategy, config.max_history_len))
    candidates = render_candidates(task)
    context = f"{history}\n\n{candidates}"

    if strategy is StrategyKind.SOFT_SELF_CONSISTENCY:
        sample_text = _fill(
            template_set.text_for(strategy, "ssc_sample.txt"), history, candidates
        )
        _check_rendered(sample_text, config)
        summary_text = _fill(
            template_set.text_for(strategy, "ssc_summarize.txt"), history, candidates
        )
        _check_rendered(summary_text, config, allow_paths=True)
        calls = [
            PlannedCall(
                tag=f"{task.task_id}/ssc/{i}",
                temperature=config.temperature_ssc_sample,
                text=sample_text,
            )
            for i in range(1, config.ssc_k + 1)
        ]
        calls.append(
            PlannedCall(
                tag=f"{task.task_id}/ssc/summary",
                temperature=config.temperature_ssc_summary,
                text=summary_text,
                deferred=True,
            )
        )
        return PromptBundle(strategy=strategy, calls=tuple(calls), rendered_context=context)

    template_name = TEMPLATE_FILES[strategy][0]
    text = _fill(template_set.text_for(strategy, template_name), history, candidates)
    _check_rendered(text, config)
    call = PlannedCall(
        tag=f"{task.task_id}/{strategy.value}/1",
        temperature=config.temperature_single,
        text=text,
    )
    return PromptBundle(strategy=strategy, calls=(call,), rendered_context=context)


def _request(call: PlannedCall, config: StrategyConfig) -> ChatRequest:
    return ChatRequest(
        model=config.model,
        messages=(("system", SYSTEM_PROMPT), ("user", call.text)),
        temperature=call.temperature,
        max_tokens=config.max_tokens,
        request_tag=call.tag,
    )


def _format_paths_block(texts: Iterable[str]) -> str:
    return "\n\n".join(
        f"--- analysis {i} ---\n{text.strip()}" for i, text in enumerate(texts, start=1)
    )


def _structural_outcome_parts(
    text: str, task: RerankTask
) -> tuple[ParsedTrace | None, int | None, ParseFailure | None, tuple[int, ...] | None]:
    parsed = parse_structural(text)
    if isinstance(parsed, ParseFailure):
        return None, None, parsed, None
    assert parsed.match_matrix is not None and parsed.weights is not None
    scores = scoring.aggregate(parsed.match_matrix, parsed.weights)
    ranking = tuple(scoring.rank_candidates(scores, task))
    pick = ranking[0]
    stated = parsed.llm_ranking[0] if parsed.llm_ranking else parsed.final_pick
    if stated is not None and stated != pick:
        logger.warning(
            "task %s: model-stated top-1 %s disagrees with recomputed top-1 %s",
            task.task_id,
            stated,
            pick,
        )
    return parsed, pick, None, ranking


def run_strategy(
    task: RerankTask,
    strategy: StrategyKind,
    backend: ChatBackend,
    template_set: TemplateSet,
    config: StrategyConfig,
    catalog: Catalog | None = None,
) -> StrategyOutcome:
    """Execute the call plan for one task and score the result.

    Parse failures are not errors: they produce an outcome with the
    parse-failure reward. Gateway errors propagate.
    """
    bundle = build_prompt(task, strategy, template_set, config, catalog)
    raw_texts: list[str] = []
    harness_ranking: tuple[int, ...] | None = None

    if strategy is StrategyKind.SOFT_SELF_CONSISTENCY:
        sample_calls, summary_call = bundle.calls[:-1], bundle.calls[-1]
        for call in sample_calls:
            raw_texts.append(backend.complete(_request(call, config)).content)
        summary_text = summary_call.text.replace(
            PATHS_PLACEHOLDER, _format_paths_block(raw_texts)
        )
        _check_rendered(summary_text, config)
        rendered_summary = PlannedCall(
            tag=summary_call.tag, temperature=summary_call.temperature, text=summary_text
        )
        summary = backend.complete(_request(rendered_summary, config)).content
        raw_texts.append(summary)
        trace: ParsedTrace | None = ssc_trace(
            tuple(t.strip() for t in raw_texts[:-1]), summary.strip()
        )
        pick = parse_final_pick(summary)
        final_pick, failure = (pick, None) if isinstance(pick, int) else (None, pick)
        prompt_text = summary_text
    else:
        call = bundle.calls[0]
        text = backend.complete(_request(call, config)).content
        raw_texts.append(text)
        prompt_text = call.text
        if strategy is StrategyKind.STRUCTURAL:
            trace, final_pick, failure, harness_ranking = _structural_outcome_parts(text, task)
        else:
            pick = parse_final_pick(text)
            if isinstance(pick, int):
                trace, final_pick, failure = plain_trace(pick), pick, None
            else:
                trace, final_pick, failure = None, None, pick

    return StrategyOutcome(
        task_id=task.task_id,
        strategy=strategy,
        raw_texts=tuple(raw_texts),
        trace=trace,
        final_pick=final_pick,
        parse_failure=failure,
        reward=scoring.reward(failure if failure is not None else final_pick, task.target_index),
        target_index=task.target_index,
        discovery=task.target_discovery,
        prompt_text=prompt_text,
        template_version=template_set.version,
        harness_ranking=harness_ranking,
    )


def outcome_to_payload(outcome: StrategyOutcome) -> dict:
    return {
        "task_id": outcome.task_id,
        "strategy": outcome.strategy.value,
        "reward": outcome.reward,
        "final_pick": outcome.final_pick,
        "parse_failure": (
            None
            if outcome.parse_failure is None
            else {"reason": outcome.parse_failure.reason.value, "offset": outcome.parse_failure.offset}
        ),
        "target_index": outcome.target_index,
        "discovery": int(outcome.discovery),
        "template_version": outcome.template_version,
        "harness_ranking": list(outcome.harness_ranking) if outcome.harness_ranking else None,
        "prompt_text": outcome.prompt_text,
        "raw_texts": list(outcome.raw_texts),
    }


def outcome_from_payload(payload: dict) -> StrategyOutcome:
    failure_raw = payload.get("parse_failure")
    failure = (
        None
        if failure_raw is None
        else ParseFailure(FailureReason(failure_raw["reason"]), failure_raw["offset"])
    )
    ranking = payload.get("harness_ranking")
    return StrategyOutcome(
        task_id=payload["task_id"],
        strategy=StrategyKind(payload["strategy"]),
        raw_texts=tuple(payload["raw_texts"]),
        trace=None,
        final_pick=payload["final_pick"],
        parse_failure=failure,
        reward=payload["reward"],
        target_index=payload["target_index"],
        discovery=bool(payload["discovery"]),
        prompt_text=payload["prompt_text"],
        template_version=payload["template_version"],
        harness_ranking=tuple(ranking) if ranking else None,
    )


def write_outcomes_jsonl(outcomes: Iterable[StrategyOutcome], path: str | Path) -> int:
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for outcome in outcomes:
            handle.write(json.dumps(outcome_to_payload(outcome), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_outcomes_jsonl(path: str | Path) -> list[StrategyOutcome]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"outcome file not found: {path}")
    outcomes = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                outcomes.append(outcome_from_payload(json.loads(line)))
    return outcomes

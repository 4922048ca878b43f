"""Structured-output grammar for model responses, and total parsers for it.

Three trace variants exist:

* plain      — only a final ``FINAL_ANSWER: <index>`` marker line
* structural — a fenced block holding the reasoning-path JSON payload
* ssc        — ``[[PATH i]]`` sections plus a ``[[SUMMARY]]`` section

Parsing never raises on arbitrary input: every failure is returned as a
``ParseFailure`` value. Last-wins rules apply throughout (last marker line,
last fenced block, last summary section), so arbitrary prefix text never
changes the result.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass

PICK_MIN = 1
PICK_MAX = 50

FINAL_MARKER = "FINAL_ANSWER"
_FINAL_RE = re.compile(rf"^[ \t]*{FINAL_MARKER}:[ \t]*(-?\d+)[ \t]*$", re.MULTILINE)
_FENCE_RE = re.compile(r"^```[^\n]*\n(.*?)\n?^```[ \t]*$", re.MULTILINE | re.DOTALL)
_FENCE_OPEN_RE = re.compile(r"^```", re.MULTILINE)
_SSC_PATH_RE = re.compile(r"^\[\[PATH (\d+)\]\][ \t]*$", re.MULTILINE)
_SSC_SUMMARY_RE = re.compile(r"^\[\[SUMMARY\]\][ \t]*$", re.MULTILINE)

PLAIN = "plain"
STRUCTURAL = "structural"
SSC = "ssc"


class FailureReason(enum.Enum):
    NO_FINAL_MARKER = "NoFinalMarker"
    BAD_JSON = "BadJson"
    SCHEMA_VIOLATION = "SchemaViolation"
    INDEX_OUT_OF_RANGE = "IndexOutOfRange"
    INCONSISTENT_DIMENSIONS = "InconsistentDimensions"


@dataclass(frozen=True)
class ParseFailure:
    """Why a model output could not be parsed, and where detection happened."""

    reason: FailureReason
    offset: int = 0


@dataclass(frozen=True)
class ReasoningPath:
    factor_name: str
    factor_kind: str
    events: tuple[tuple[str, str | None], ...]


@dataclass(frozen=True)
class MatchMatrix:
    """P x C grid of per-path match scores for the scored candidates."""

    scores: tuple[tuple[float, ...], ...]
    candidate_index_map: tuple[int, ...]

    @property
    def n_paths(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class ImportanceWeights:
    raw: tuple[float, ...]


@dataclass(frozen=True)
class ParsedTrace:
    variant: str
    final_pick: int | None
    paths: tuple[ReasoningPath, ...] = ()
    match_matrix: MatchMatrix | None = None
    weights: ImportanceWeights | None = None
    llm_ranking: tuple[int, ...] | None = None
    ssc_paths: tuple[str, ...] = ()
    ssc_summary: str = ""


def plain_trace(final_pick: int) -> ParsedTrace:
    return ParsedTrace(variant=PLAIN, final_pick=final_pick)


def structural_trace(
    paths: tuple[ReasoningPath, ...],
    match_matrix: MatchMatrix,
    weights: ImportanceWeights,
    llm_ranking: tuple[int, ...] | None = None,
    final_pick: int | None = None,
) -> ParsedTrace:
    return ParsedTrace(
        variant=STRUCTURAL,
        final_pick=final_pick,
        paths=paths,
        match_matrix=match_matrix,
        weights=weights,
        llm_ranking=llm_ranking,
    )


def ssc_trace(path_texts: tuple[str, ...], summary: str) -> ParsedTrace:
    """Build an SSC trace; the pick always comes from the summary text."""
    pick = parse_final_pick(summary)
    return ParsedTrace(
        variant=SSC,
        final_pick=pick if isinstance(pick, int) else None,
        ssc_paths=path_texts,
        ssc_summary=summary,
    )


def parse_final_pick(text: str) -> int | ParseFailure:
    """Extract the candidate index from the last FINAL_ANSWER marker line."""
    matches = list(_FINAL_RE.finditer(text))
    if not matches:
        return ParseFailure(FailureReason.NO_FINAL_MARKER, offset=len(text))
    last = matches[-1]
    pick = int(last.group(1))
    if not PICK_MIN <= pick <= PICK_MAX:
        return ParseFailure(FailureReason.INDEX_OUT_OF_RANGE, offset=last.start(1))
    return pick


def extract_structured_block(text: str) -> str | ParseFailure:
    """Return the contents of the last complete triple-backtick fence."""
    matches = list(_FENCE_RE.finditer(text))
    if matches:
        return matches[-1].group(1)
    opener = _FENCE_OPEN_RE.search(text)
    offset = opener.start() if opener else len(text)
    return ParseFailure(FailureReason.BAD_JSON, offset=offset)


def _is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _parse_event(raw: object) -> tuple[str, str | None] | None:
    if isinstance(raw, str):
        return (raw, None)
    if (
        isinstance(raw, list)
        and len(raw) == 2
        and isinstance(raw[0], str)
        and isinstance(raw[1], str)
    ):
        return (raw[0], raw[1])
    return None


def _parse_paths(raw: object, offset: int) -> tuple[ReasoningPath, ...] | ParseFailure:
    if not isinstance(raw, list) or not raw:
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
    paths: list[ReasoningPath] = []
    for entry in raw:
        if not isinstance(entry, dict) or set(entry) != {"factor", "kind", "events"}:
            return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
        factor, kind, events_raw = entry["factor"], entry["kind"], entry["events"]
        if not isinstance(factor, str) or not factor or not isinstance(kind, str):
            return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
        if not isinstance(events_raw, list) or not events_raw:
            return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
        events: list[tuple[str, str | None]] = []
        for raw_event in events_raw:
            event = _parse_event(raw_event)
            if event is None:
                return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
            events.append(event)
        paths.append(ReasoningPath(factor_name=factor, factor_kind=kind, events=tuple(events)))
    return tuple(paths)


def _parse_match_scores(raw: object, n_paths: int, offset: int) -> MatchMatrix | ParseFailure:
    if not isinstance(raw, dict):
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
    indexed: dict[int, tuple[float, ...]] = {}
    for key, value in raw.items():
        try:
            cand = int(key)
        except (TypeError, ValueError):
            return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
        if not PICK_MIN <= cand <= PICK_MAX:
            return ParseFailure(FailureReason.INDEX_OUT_OF_RANGE, offset=offset)
        if cand in indexed:
            return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
        if not isinstance(value, list):
            return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
        if len(value) != n_paths:
            return ParseFailure(FailureReason.INCONSISTENT_DIMENSIONS, offset=offset)
        for score in value:
            if not _is_number(score) or not 0.0 <= float(score) <= 1.0:
                return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
        indexed[cand] = tuple(float(s) for s in value)

    candidate_index_map = tuple(sorted(indexed))
    rows = tuple(
        tuple(indexed[cand][p] for cand in candidate_index_map) for p in range(n_paths)
    )
    return MatchMatrix(scores=rows, candidate_index_map=candidate_index_map)


def _parse_weights(raw: object, n_paths: int, offset: int) -> ImportanceWeights | ParseFailure:
    if not isinstance(raw, list):
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
    if len(raw) != n_paths:
        return ParseFailure(FailureReason.INCONSISTENT_DIMENSIONS, offset=offset)
    for weight in raw:
        if not _is_number(weight) or float(weight) < 0.0:
            return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
    return ImportanceWeights(raw=tuple(float(w) for w in raw))


def _parse_ranking(raw: object, offset: int) -> tuple[int, ...] | ParseFailure:
    if not isinstance(raw, list):
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
    entries: list[int] = []
    for value in raw:
        if not isinstance(value, int) or isinstance(value, bool):
            return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
        if not PICK_MIN <= value <= PICK_MAX:
            return ParseFailure(FailureReason.INDEX_OUT_OF_RANGE, offset=offset)
        entries.append(value)
    if len(set(entries)) != len(entries):
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
    return tuple(entries)


def parse_structural(text: str) -> ParsedTrace | ParseFailure:
    """Parse the fenced JSON payload of a structural reasoning response.

    The schema is strict: out-of-range scores, negative weights or unknown
    keys are rejected rather than repaired, so rejects map cleanly to the
    parse-failure reward.
    """
    matches = list(_FENCE_RE.finditer(text))
    if not matches:
        opener = _FENCE_OPEN_RE.search(text)
        return ParseFailure(FailureReason.BAD_JSON, offset=opener.start() if opener else len(text))
    block = matches[-1].group(1)
    offset = matches[-1].start(1)
    try:
        payload = json.loads(block)
    except json.JSONDecodeError as exc:
        return ParseFailure(FailureReason.BAD_JSON, offset=offset + exc.pos)
    if not isinstance(payload, dict):
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)
    keys = set(payload)
    if not {"paths", "match_scores", "weights"} <= keys or not keys <= {
        "paths",
        "match_scores",
        "weights",
        "ranking",
    }:
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=offset)

    paths = _parse_paths(payload["paths"], offset)
    if isinstance(paths, ParseFailure):
        return paths
    matrix = _parse_match_scores(payload["match_scores"], len(paths), offset)
    if isinstance(matrix, ParseFailure):
        return matrix
    weights = _parse_weights(payload["weights"], len(paths), offset)
    if isinstance(weights, ParseFailure):
        return weights
    ranking: tuple[int, ...] | None = None
    if "ranking" in payload:
        parsed_ranking = _parse_ranking(payload["ranking"], offset)
        if isinstance(parsed_ranking, ParseFailure):
            return parsed_ranking
        ranking = parsed_ranking

    pick = parse_final_pick(text)
    return structural_trace(
        paths=paths,
        match_matrix=matrix,
        weights=weights,
        llm_ranking=ranking,
        final_pick=pick if isinstance(pick, int) else None,
    )


def parse_ssc(text: str) -> ParsedTrace | ParseFailure:
    """Parse the canonical SSC section layout (paths then summary)."""
    summaries = list(_SSC_SUMMARY_RE.finditer(text))
    if not summaries:
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=len(text))
    summary_match = summaries[-1]
    summary = text[summary_match.end() :].strip()

    head = text[: summary_match.start()]
    path_matches = list(_SSC_PATH_RE.finditer(head))
    if not path_matches:
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=summary_match.start())
    numbers = [int(m.group(1)) for m in path_matches]
    if numbers != list(range(1, len(numbers) + 1)):
        return ParseFailure(FailureReason.SCHEMA_VIOLATION, offset=path_matches[0].start())

    sections: list[str] = []
    for i, match in enumerate(path_matches):
        end = path_matches[i + 1].start() if i + 1 < len(path_matches) else summary_match.start()
        sections.append(head[match.end() : end].strip())
    return ssc_trace(path_texts=tuple(sections), summary=summary)


def parse_trace(text: str) -> ParsedTrace | ParseFailure:
    """Dispatch on the trace layout found in the text. Total over any input."""
    if _SSC_SUMMARY_RE.search(text):
        return parse_ssc(text)
    if _FENCE_RE.search(text):
        return parse_structural(text)
    pick = parse_final_pick(text)
    if isinstance(pick, ParseFailure):
        return pick
    return plain_trace(pick)


def _event_payload(event: tuple[str, str | None]) -> object:
    title, ts = event
    return title if ts is None else [title, ts]


def structural_payload(trace: ParsedTrace) -> dict:
    """The canonical JSON object embedded in a structural trace."""
    assert trace.match_matrix is not None and trace.weights is not None
    matrix = trace.match_matrix
    payload: dict = {
        "paths": [
            {
                "factor": p.factor_name,
                "kind": p.factor_kind,
                "events": [_event_payload(e) for e in p.events],
            }
            for p in trace.paths
        ],
        "match_scores": {
            str(cand): [matrix.scores[p][col] for p in range(matrix.n_paths)]
            for col, cand in enumerate(matrix.candidate_index_map)
        },
        "weights": list(trace.weights.raw),
    }
    if trace.llm_ranking is not None:
        payload["ranking"] = list(trace.llm_ranking)
    return payload


def serialize_trace(trace: ParsedTrace) -> str:
    """Render a trace in its canonical text form; parse(serialize(t)) == t.

    Round-tripping requires well-formed traces: SSC section texts must be
    whitespace-stripped and free of section-marker or FINAL_ANSWER lines
    outside the summary; structural payload strings must not contain
    backtick fences.
    """
    if trace.variant == PLAIN:
        return f"{FINAL_MARKER}: {trace.final_pick}"
    if trace.variant == STRUCTURAL:
        body = json.dumps(structural_payload(trace), ensure_ascii=False)
        text = f"```\n{body}\n```"
        if trace.final_pick is not None:
            text += f"\n{FINAL_MARKER}: {trace.final_pick}"
        return text
    if trace.variant == SSC:
        parts = []
        for i, section in enumerate(trace.ssc_paths, start=1):
            parts.append(f"[[PATH {i}]]\n{section}")
        parts.append(f"[[SUMMARY]]\n{trace.ssc_summary}")
        return "\n".join(parts)
    raise ValueError(f"unknown trace variant {trace.variant!r}")

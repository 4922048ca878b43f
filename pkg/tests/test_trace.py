from __future__ import annotations

import json
import random

import pytest

from coldrank.trace import (
    FailureReason,
    ParsedTrace,
    ParseFailure,
    extract_structured_block,
    parse_final_pick,
    parse_ssc,
    parse_structural,
    parse_trace,
    plain_trace,
    serialize_trace,
    ssc_trace,
)


def test_final_pick_basic():
    assert parse_final_pick("...reasoning...\nFINAL_ANSWER: 17") == 17


def test_final_pick_no_marker():
    result = parse_final_pick("there is nothing here")
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.NO_FINAL_MARKER


def test_final_pick_last_wins():
    assert parse_final_pick("FINAL_ANSWER: 3\nmore text\nFINAL_ANSWER: 41") == 41


@pytest.mark.parametrize("value", [0, 51, -3, 999])
def test_final_pick_out_of_range(value):
    result = parse_final_pick(f"FINAL_ANSWER: {value}")
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.INDEX_OUT_OF_RANGE


def test_final_pick_requires_own_line():
    assert isinstance(parse_final_pick("the FINAL_ANSWER: 3 is here"), ParseFailure)
    assert isinstance(parse_final_pick("FINAL_ANSWER: 3."), ParseFailure)
    assert parse_final_pick("  FINAL_ANSWER: 3  ") == 3


def test_final_pick_prefix_insensitive():
    text = "FINAL_ANSWER: 9"
    assert parse_final_pick("arbitrary preamble\n" + text) == parse_final_pick(text)


def test_extract_block_single():
    assert extract_structured_block("before\n```\n{\"a\": 1}\n```\nafter") == '{"a": 1}'


def test_extract_block_last_wins():
    text = "```\nfirst\n```\nmiddle\n```json\nsecond\n```"
    assert extract_structured_block(text) == "second"


def test_extract_block_unterminated():
    result = extract_structured_block("```\nnever closed")
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.BAD_JSON


def test_extract_block_absent():
    result = extract_structured_block("no fences at all")
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.BAD_JSON


def _payload(n_paths=3, n_candidates=50, ranking=None):
    paths = [
        {"factor": "actor: Anna Hart", "kind": "actor", "events": ["Storm Line", "Glass Harbor"]},
        {"factor": "genre: action", "kind": "genre", "events": [["Night Cargo", "2024-05-01"]]},
        {"factor": "director: Tom Ellery", "kind": "director", "events": ["The Long Quiet"]},
    ][:n_paths]
    scores = {
        str(c): [round(((c * 7 + p * 3) % 10) / 10, 1) for p in range(n_paths)]
        for c in range(1, n_candidates + 1)
    }
    payload = {"paths": paths, "match_scores": scores, "weights": [0.5, 0.3, 0.2][:n_paths]}
    if ranking is not None:
        payload["ranking"] = ranking
    return payload


def _fenced(payload) -> str:
    return "```\n" + json.dumps(payload) + "\n```"


def test_parse_structural_three_paths_fifty_candidates():
    trace = parse_structural(_fenced(_payload()) + "\nFINAL_ANSWER: 4")
    assert isinstance(trace, ParsedTrace)
    assert len(trace.paths) == 3
    assert trace.match_matrix is not None
    assert len(trace.match_matrix.candidate_index_map) == 50
    assert trace.match_matrix.n_paths == 3
    assert trace.final_pick == 4
    assert {p.factor_kind for p in trace.paths} == {"actor", "genre", "director"}


def test_parse_structural_weight_dimension_mismatch():
    payload = _payload()
    payload["weights"] = [0.5, 0.5]
    result = parse_structural(_fenced(payload))
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.INCONSISTENT_DIMENSIONS


def test_parse_structural_score_row_dimension_mismatch():
    payload = _payload()
    payload["match_scores"]["5"] = [0.1, 0.2]
    result = parse_structural(_fenced(payload))
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.INCONSISTENT_DIMENSIONS


def test_parse_structural_score_out_of_range():
    payload = _payload()
    payload["match_scores"]["3"] = [1.3, 0.2, 0.1]
    result = parse_structural(_fenced(payload))
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.SCHEMA_VIOLATION


def test_parse_structural_negative_weight():
    payload = _payload()
    payload["weights"] = [-0.1, 0.5, 0.6]
    result = parse_structural(_fenced(payload))
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.SCHEMA_VIOLATION


def test_parse_structural_candidate_index_out_of_range():
    payload = _payload()
    payload["match_scores"]["51"] = [0.1, 0.2, 0.3]
    result = parse_structural(_fenced(payload))
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.INDEX_OUT_OF_RANGE


def test_parse_structural_bad_json():
    result = parse_structural("```\nnot json at all {\n```")
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.BAD_JSON


def test_parse_structural_unknown_key():
    payload = _payload()
    payload["extra"] = 1
    result = parse_structural(_fenced(payload))
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.SCHEMA_VIOLATION


def test_parse_structural_duplicate_ranking():
    result = parse_structural(_fenced(_payload(ranking=[1, 2, 1])))
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.SCHEMA_VIOLATION


def test_parse_structural_empty_paths():
    payload = _payload()
    payload["paths"] = []
    result = parse_structural(_fenced(payload))
    assert isinstance(result, ParseFailure)
    assert result.reason is FailureReason.SCHEMA_VIOLATION


def test_parse_structural_subset_of_candidates():
    payload = _payload()
    payload["match_scores"] = {"2": [0.1, 0.2, 0.3], "9": [0.9, 0.8, 0.7]}
    trace = parse_structural(_fenced(payload))
    assert isinstance(trace, ParsedTrace)
    assert trace.match_matrix.candidate_index_map == (2, 9)


def test_round_trip_all_variants():
    from worldgen import make_random_trace

    rng = random.Random(7)
    for _ in range(200):
        trace = make_random_trace(rng)
        assert parse_trace(serialize_trace(trace)) == trace


def test_serialize_plain_ends_with_marker():
    assert serialize_trace(plain_trace(7)).endswith("FINAL_ANSWER: 7")


def test_serialize_ssc_layout():
    trace = ssc_trace(("one", "two"), "done\nFINAL_ANSWER: 12")
    text = serialize_trace(trace)
    assert text.startswith("[[PATH 1]]\none\n[[PATH 2]]\ntwo\n[[SUMMARY]]\n")
    assert text.endswith("FINAL_ANSWER: 12")
    assert trace.final_pick == 12
    parsed = parse_ssc(text)
    assert parsed == trace


def test_parse_totality_fuzz_small():
    rng = random.Random(99)
    corpus = ["FINAL_ANSWER", "```", "[[SUMMARY]]", "[[PATH 1]]", "{", "}", ":", "17", "\n", "a"]
    for _ in range(500):
        text = "".join(rng.choice(corpus) for _ in range(rng.randint(0, 40)))
        result = parse_trace(text)
        assert isinstance(result, (ParsedTrace, ParseFailure))


def test_parse_trace_dispatches_plain():
    assert parse_trace("blah\nFINAL_ANSWER: 30") == plain_trace(30)

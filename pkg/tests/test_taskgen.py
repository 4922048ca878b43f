from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from coldrank.catalog import COLD, WARM, ColdStartSplit, Interaction
from coldrank.errors import (
    InsufficientColdCandidates,
    InsufficientWarmCandidates,
    UserNotInMode,
)
from coldrank.taskgen import (
    N_CANDIDATES,
    N_COLD,
    N_WARM,
    PopularityRanker,
    TaskConfig,
    assemble_task,
    build_tasks,
    derive_task_seed,
    load_baseline_scores,
    rank_warm_candidates,
    read_tasks_jsonl,
    task_to_payload,
    truncate_history,
    write_tasks_jsonl,
)

from worldgen import CUTOFF, make_world


def _event(user, item, hour):
    return Interaction(user, item, datetime(2024, 1, 1, tzinfo=timezone.utc) + timedelta(hours=hour), False)


def _tiny_split(per_user_history, warm, cold, targets):
    return ColdStartSplit(
        cutoff_date=CUTOFF,
        warm_items=frozenset(warm),
        cold_items=frozenset(cold),
        per_user_history=per_user_history,
        targets=targets,
    )


def test_truncate_keeps_latest():
    events = [_event("u", f"w{i}", i) for i in range(80)]
    kept = truncate_history(events, 50)
    assert len(kept) == 50
    assert kept[0].item_id == "w30"
    assert kept[-1].item_id == "w79"


def test_truncate_short_history_untouched():
    events = [_event("u", f"w{i}", i) for i in range(30)]
    assert len(truncate_history(events, 50)) == 30


def test_truncate_rejects_zero():
    with pytest.raises(ValueError):
        truncate_history([], 0)


def test_fast_reason_doubles_history_budget():
    from coldrank.strategies import StrategyKind, history_budget

    assert history_budget(StrategyKind.FAST_REASON, 50) == 100
    assert history_budget(StrategyKind.BASE_REASON, 50) == 50


def test_popularity_ranker_counts_and_ties():
    history = {
        "u1": tuple(_event("u1", item, i) for i, item in enumerate(["A"] * 5 + ["B"] * 9)),
        "u2": tuple(_event("u2", "C", i) for i in range(9)),
    }
    split = _tiny_split(history, warm={"A", "B", "C"}, cold=set(), targets={})
    ranker = PopularityRanker(split)
    scores = ranker.scores("anyone")
    assert scores == {"A": 5.0, "B": 9.0, "C": 9.0}
    order = sorted(scores, key=lambda i: (-scores[i], i))
    assert order == ["B", "C", "A"]


def test_rank_warm_excludes_watched_and_orders(small_world):
    catalog, _, split = small_world
    ranker = PopularityRanker(split)
    user = "u000"
    ranked = rank_warm_candidates(user, split, catalog, ranker)
    seen = {e.item_id for e in split.per_user_history[user]}
    assert not seen & set(ranked)
    assert len(ranked) >= N_WARM
    scores = ranker.scores(user)
    assert ranked == sorted(ranked, key=lambda i: (-scores[i], i))


def test_rank_warm_insufficient():
    history = {"u1": ()}
    warm = {f"w{i}" for i in range(39)}
    split = _tiny_split(history, warm=warm, cold=set(), targets={})
    with pytest.raises(InsufficientWarmCandidates) as excinfo:
        rank_warm_candidates("u1", split, {}, PopularityRanker(split))
    assert excinfo.value.available == 39


def test_file_ranker_loads_and_orders(tmp_path):
    path = tmp_path / "baseline_scores.csv"
    path.write_text(
        "user_id,item_id,score\nu1,w1,0.5\nu1,w2,0.9\nu2,w1,0.1\n", encoding="utf-8"
    )
    ranker = load_baseline_scores(path)
    assert ranker.scores("u1") == {"w1": 0.5, "w2": 0.9}
    assert ranker.scores("u2") == {"w1": 0.1}
    assert ranker.scores("unknown") == {}


def _assert_task_shape(task, split):
    assert len(task.candidates) == N_CANDIDATES
    ids = [slot.item_id for slot in task.candidates]
    assert len(set(ids)) == N_CANDIDATES
    assert [slot.index for slot in task.candidates] == list(range(1, N_CANDIDATES + 1))
    n_cold = sum(1 for i in ids if i in split.cold_items)
    assert n_cold == N_COLD
    assert task.candidates[task.target_index - 1].item_id == task.target_item_id


def test_assemble_cold_task(small_world):
    catalog, _, split = small_world
    user = split.users_in_mode(COLD)[0]
    ranker = PopularityRanker(split)
    task = assemble_task(user, split, catalog, TaskConfig(), derive_task_seed(0, user), ranker)
    _assert_task_shape(task, split)
    assert task.mode == COLD
    assert task.target_item_id in split.cold_items
    assert task.target_item_id == split.targets[user].item_id
    assert task.target_discovery == split.targets[user].discovery


def test_assemble_task_deterministic(small_world):
    catalog, _, split = small_world
    user = split.users_in_mode(COLD)[0]
    ranker = PopularityRanker(split)
    seed = derive_task_seed(42, user)
    first = assemble_task(user, split, catalog, TaskConfig(), seed, ranker)
    second = assemble_task(user, split, catalog, TaskConfig(), seed, ranker)
    assert first == second
    assert task_to_payload(first) == task_to_payload(second)


def test_assemble_cold_insufficient_cold_items():
    catalog, _, split = make_world(n_users=2, n_cold=9)
    user = split.users_in_mode(COLD)[0]
    ranker = PopularityRanker(split)
    with pytest.raises(InsufficientColdCandidates):
        assemble_task(user, split, catalog, TaskConfig(), 1, ranker)


def test_assemble_warm_mode_forces_target(small_world):
    catalog, _, _ = small_world
    _, _, split = make_world(n_users=8, warm_final_every=2)
    users = split.users_in_mode(WARM)
    assert users
    ranker = PopularityRanker(split)
    for user in users:
        task = assemble_task(
            user, split, catalog, TaskConfig(), derive_task_seed(0, user), ranker, mode=WARM
        )
        _assert_task_shape(task, split)
        assert task.mode == WARM
        assert task.target_item_id in split.warm_items


def test_assemble_wrong_mode_rejected(small_world):
    catalog, _, split = small_world
    user = split.users_in_mode(COLD)[0]
    with pytest.raises(UserNotInMode):
        assemble_task(user, split, catalog, TaskConfig(), 1, PopularityRanker(split), mode=WARM)
    with pytest.raises(UserNotInMode):
        assemble_task("ghost", split, catalog, TaskConfig(), 1, PopularityRanker(split))


def test_candidates_never_in_history(small_world):
    catalog, log, split = small_world
    ranker = PopularityRanker(split)
    tasks = build_tasks(split, catalog, TaskConfig(), 0, ranker)
    for task in tasks:
        full_history = {e.item_id for e in log[task.user_id][:-1]}
        for slot in task.candidates:
            if slot.item_id in split.cold_items:
                assert slot.item_id not in full_history
            elif slot.item_id != task.target_item_id:
                assert slot.item_id not in {e.item_id for e in split.per_user_history[task.user_id]}


def test_build_tasks_ordered_and_seeded(small_world):
    catalog, _, split = small_world
    ranker = PopularityRanker(split)
    tasks = build_tasks(split, catalog, TaskConfig(), 7, ranker)
    assert [t.user_id for t in tasks] == split.users_in_mode(COLD)
    again = build_tasks(split, catalog, TaskConfig(), 7, ranker)
    assert tasks == again
    different = build_tasks(split, catalog, TaskConfig(), 8, ranker)
    assert tasks != different


def test_derive_task_seed_is_stable_64_bit():
    seed = derive_task_seed(3, "u001")
    assert seed == derive_task_seed(3, "u001")
    assert 0 <= seed < 2**64
    assert seed != derive_task_seed(4, "u001")
    assert seed != derive_task_seed(3, "u002")


def test_tasks_jsonl_round_trip(tmp_path, small_world):
    catalog, _, split = small_world
    tasks = build_tasks(split, catalog, TaskConfig(), 0, PopularityRanker(split))
    path = tmp_path / "tasks.jsonl"
    assert write_tasks_jsonl(tasks, path) == len(tasks)
    assert read_tasks_jsonl(path) == tasks


def test_history_multiplier_extends_truncation():
    catalog, _, split = make_world(n_users=2, history_len=120)
    ranker = PopularityRanker(split)
    user = split.users_in_mode(COLD)[0]
    base = assemble_task(user, split, catalog, TaskConfig(max_history_len=50), 1, ranker)
    doubled = assemble_task(
        user, split, catalog, TaskConfig(max_history_len=50, history_multiplier=2), 1, ranker
    )
    assert len(base.history) == 50
    assert len(doubled.history) == 100

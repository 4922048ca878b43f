"""Subcommand entry point tying the pipeline together.

Commands: ingest, split, tasks, run, eval, curate-sft, curate-grpo,
serve-reward, report. Every command takes --config plus flag overrides
(flags win); all are idempotent for identical inputs and seed when the
backend is the scripted mock.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import catalog as catalog_mod
from . import config as config_mod
from . import curation, scoring, strategies, taskgen
from .config import RunConfig
from .errors import ColdRankError, ConfigError
from .gateway import Gateway, HttpBackend, load_mock_script
from .reward_service import RewardService
from .strategies import StrategyConfig, StrategyKind, TemplateSet

logger = logging.getLogger(__name__)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _load_inputs(config: RunConfig):
    catalog = catalog_mod.load_catalog(config.catalog_path)
    log = catalog_mod.load_interactions(config.interactions_path, catalog)
    return catalog, log


def _make_split(config: RunConfig):
    catalog, log = _load_inputs(config)
    return catalog, catalog_mod.split_cold_start(catalog, log, config.cutoff())


def _make_ranker(config: RunConfig, split) -> taskgen.Ranker:
    if config.ranker == "file":
        assert config.baseline_scores_path is not None
        return taskgen.load_baseline_scores(config.baseline_scores_path)
    return taskgen.PopularityRanker(split)


def _strategy_kind(config: RunConfig) -> StrategyKind:
    return StrategyKind(config.strategy)


def _task_config(config: RunConfig) -> taskgen.TaskConfig:
    multiplier = 2 if _strategy_kind(config) is StrategyKind.FAST_REASON else 1
    return taskgen.TaskConfig(max_history_len=config.max_history_len, history_multiplier=multiplier)


def _template_set(config: RunConfig) -> TemplateSet:
    if config.templates_dir:
        return TemplateSet.from_dir(config.templates_dir)
    return TemplateSet.packaged()


def _strategy_config(config: RunConfig) -> StrategyConfig:
    return StrategyConfig(
        model=config.model,
        max_history_len=config.max_history_len,
        ssc_k=config.ssc_k,
        max_tokens=config.max_tokens,
        temperature_single=config.temperature_single,
        temperature_ssc_sample=config.temperature_ssc_sample,
        temperature_ssc_summary=config.temperature_ssc_summary,
    )


def _make_gateway(config: RunConfig) -> Gateway:
    if config.mock_script_path:
        backend = load_mock_script(config.mock_script_path)
    elif config.backend_url:
        backend = HttpBackend(
            config.backend_url, api_key=config.api_key, max_retries=config.max_retries
        )
    else:
        raise ConfigError("set either mock_script_path or backend_url (or LLM_BASE_URL)")
    return Gateway(backend, max_concurrency=config.max_concurrency)


def _build_or_load_tasks(config: RunConfig) -> list[taskgen.RerankTask]:
    tasks_path = config.out_path("tasks.jsonl")
    if tasks_path.exists():
        return taskgen.read_tasks_jsonl(tasks_path)
    catalog, split = _make_split(config)
    tasks = taskgen.build_tasks(
        split, catalog, _task_config(config), config.seed, _make_ranker(config, split), config.mode
    )
    tasks_path.parent.mkdir(parents=True, exist_ok=True)
    taskgen.write_tasks_jsonl(tasks, tasks_path)
    return tasks


def cmd_ingest(config: RunConfig, args: argparse.Namespace) -> int:
    catalog, log = _load_inputs(config)
    summary = {
        "n_items": len(catalog),
        "n_users": len(log),
        "n_interactions": sum(len(events) for events in log.values()),
    }
    _write_json(config.out_path("ingest_summary.json"), summary)
    print(json.dumps(summary))
    return 0


def cmd_split(config: RunConfig, args: argparse.Namespace) -> int:
    _, split = _make_split(config)
    summary = {
        "cutoff_date": split.cutoff_date.isoformat(),
        "n_warm_items": len(split.warm_items),
        "n_cold_items": len(split.cold_items),
        "n_users": len(split.targets),
        "n_cold_mode_users": len(split.users_in_mode(catalog_mod.COLD)),
        "n_warm_mode_users": len(split.users_in_mode(catalog_mod.WARM)),
        "dropped_cold_interactions": split.dropped_cold_interactions,
        "dropped_tied_interactions": split.dropped_tied_interactions,
    }
    _write_json(config.out_path("split_summary.json"), summary)
    print(json.dumps(summary))
    return 0


def cmd_tasks(config: RunConfig, args: argparse.Namespace) -> int:
    catalog, split = _make_split(config)
    tasks = taskgen.build_tasks(
        split, catalog, _task_config(config), config.seed, _make_ranker(config, split), config.mode
    )
    out = config.out_path("tasks.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    count = taskgen.write_tasks_jsonl(tasks, out)
    print(f"wrote {count} tasks to {out}")
    return 0


def cmd_run(config: RunConfig, args: argparse.Namespace) -> int:
    catalog = catalog_mod.load_catalog(config.catalog_path)
    tasks = _build_or_load_tasks(config)
    gateway = _make_gateway(config)
    template_set = _template_set(config)
    strategy_config = _strategy_config(config)
    kind = _strategy_kind(config)

    def run_one(task: taskgen.RerankTask) -> strategies.StrategyOutcome:
        return strategies.run_strategy(task, kind, gateway, template_set, strategy_config, catalog)

    # Collect everything before writing so a transport failure leaves no partial report.
    with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
        outcomes = list(pool.map(run_one, tasks))
    outcomes.sort(key=lambda o: o.task_id)

    out_outcomes = config.out_path("outcomes.jsonl")
    out_outcomes.parent.mkdir(parents=True, exist_ok=True)
    strategies.write_outcomes_jsonl(outcomes, out_outcomes)

    report = scoring.build_eval_report(outcomes)
    payload = scoring.report_payload(report)
    _write_json(config.out_path("report.json"), payload)
    print(json.dumps(payload))
    return 0


def _relative_block(report: scoring.EvalReport, args: argparse.Namespace) -> dict | None:
    baseline_anyplay = getattr(args, "baseline_anyplay", None)
    baseline_discovery = getattr(args, "baseline_discovery", None)
    if baseline_anyplay is None and baseline_discovery is None:
        return None
    block: dict = {"baseline": getattr(args, "baseline_name", None) or "baseline"}
    if baseline_anyplay is not None:
        block["baseline_anyplay"] = baseline_anyplay
        block["anyplay_pct"] = scoring.relative_performance(
            report.recall_at_1_anyplay, baseline_anyplay
        )
    if baseline_discovery is not None and report.recall_at_1_discovery is not None:
        block["baseline_discovery"] = baseline_discovery
        block["discovery_pct"] = scoring.relative_performance(
            report.recall_at_1_discovery, baseline_discovery
        )
    return block


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    outcomes = strategies.read_outcomes_jsonl(config.out_path("outcomes.jsonl"))
    report = scoring.build_eval_report(outcomes)
    payload = scoring.report_payload(report, relative_to=_relative_block(report, args))
    _write_json(config.out_path("report.json"), payload)
    print(json.dumps(payload))
    return 0


def cmd_curate_sft(config: RunConfig, args: argparse.Namespace) -> int:
    outcomes = strategies.read_outcomes_jsonl(config.out_path("outcomes.jsonl"))
    examples = curation.collect_sft(outcomes)
    out = config.out_path("sft.jsonl")
    count = curation.export_jsonl(examples, out, kind="sft")
    print(f"wrote {count} SFT examples to {out}")
    return 0


def cmd_curate_grpo(config: RunConfig, args: argparse.Namespace) -> int:
    outcomes = strategies.read_outcomes_jsonl(config.out_path("outcomes.jsonl"))
    prompts = curation.build_grpo_prompts(outcomes, config.oversample_factor, seed=config.seed)
    out = config.out_path("grpo.jsonl")
    count = curation.export_jsonl(prompts, out, kind="grpo")
    print(f"wrote {count} GRPO prompts to {out}")
    return 0


def cmd_serve_reward(config: RunConfig, args: argparse.Namespace) -> int:
    tasks = taskgen.read_tasks_jsonl(config.out_path("tasks.jsonl"))
    targets = {task.task_id: task.target_index for task in tasks}
    service = RewardService(targets, port=config.port)
    print(json.dumps({"event": "listening", "port": service.port, "n_tasks": len(targets)}), flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_report(config: RunConfig, args: argparse.Namespace) -> int:
    current = json.loads(Path(args.report).read_text(encoding="utf-8"))
    baseline = json.loads(Path(args.baseline_report).read_text(encoding="utf-8"))
    comparison: dict = {
        "report": args.report,
        "baseline": args.baseline_report,
        "anyplay_pct": scoring.relative_performance(
            current["anyplay_recall1"], baseline["anyplay_recall1"]
        ),
    }
    if current.get("discovery_recall1") is not None and baseline.get("discovery_recall1"):
        comparison["discovery_pct"] = scoring.relative_performance(
            current["discovery_recall1"], baseline["discovery_recall1"]
        )
    _write_json(config.out_path("comparison.json"), comparison)
    print(json.dumps(comparison))
    return 0


_COMMANDS = {
    "ingest": (cmd_ingest, True),
    "split": (cmd_split, True),
    "tasks": (cmd_tasks, True),
    "run": (cmd_run, True),
    "eval": (cmd_eval, False),
    "curate-sft": (cmd_curate_sft, False),
    "curate-grpo": (cmd_curate_grpo, False),
    "serve-reward": (cmd_serve_reward, False),
    "report": (cmd_report, False),
}

_OVERRIDE_FLAGS: list[tuple[str, type]] = [
    ("catalog_path", str),
    ("interactions_path", str),
    ("output_dir", str),
    ("templates_dir", str),
    ("baseline_scores_path", str),
    ("cutoff_date", str),
    ("mode", str),
    ("strategy", str),
    ("ranker", str),
    ("backend_url", str),
    ("mock_script_path", str),
    ("model", str),
    ("seed", int),
    ("max_history_len", int),
    ("ssc_k", int),
    ("oversample_factor", int),
    ("max_concurrency", int),
    ("max_retries", int),
    ("max_tokens", int),
    ("temperature_single", float),
    ("temperature_ssc_sample", float),
    ("temperature_ssc_summary", float),
    ("port", int),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coldrank", description="Cold-start re-ranking pipeline"
    )
    subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name in _COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", help="TOML config file with flat RunConfig keys")
        for field_name, field_type in _OVERRIDE_FLAGS:
            flag = "--" + field_name.replace("_", "-")
            sub.add_argument(flag, dest=field_name, type=field_type, default=None)
        if name == "eval":
            sub.add_argument("--baseline-anyplay", type=float, default=None)
            sub.add_argument("--baseline-discovery", type=float, default=None)
            sub.add_argument("--baseline-name", default=None)
        if name == "report":
            sub.add_argument("--report", required=True)
            sub.add_argument("--baseline-report", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handler, need_inputs = _COMMANDS[args.command]
    try:
        config = config_mod.load_config(args.config) if args.config else RunConfig()
        config = config_mod.apply_env_overrides(config)
        overrides = {name: getattr(args, name, None) for name, _ in _OVERRIDE_FLAGS}
        config = config_mod.apply_overrides(config, overrides)
        config = config_mod.validate(config, need_inputs=need_inputs)
        return handler(config, args)
    except ColdRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

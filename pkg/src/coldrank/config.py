"""Run configuration: flat TOML file plus flag and environment overrides."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, fields, replace
from datetime import date
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .catalog import MODES
from .errors import ConfigError

ENV_BASE_URL = "LLM_BASE_URL"
ENV_API_KEY = "LLM_API_KEY"

STRATEGY_NAMES = ("direct_rec", "base_reason", "fast_reason", "structural", "ssc")
RANKER_NAMES = ("popularity", "file")


@dataclass(frozen=True)
class RunConfig:
    catalog_path: str = "items.csv"
    interactions_path: str = "interactions.csv"
    output_dir: str = "out"
    templates_dir: str | None = None  # None -> packaged defaults
    baseline_scores_path: str | None = None
    cutoff_date: str = ""
    mode: str = "cold"
    strategy: str = "direct_rec"
    ranker: str = "popularity"
    backend_url: str | None = None
    mock_script_path: str | None = None
    api_key: str | None = None
    model: str = "mock-model"
    seed: int = 0
    max_history_len: int = 50
    ssc_k: int = 5
    oversample_factor: int = 2
    max_concurrency: int = 4
    max_retries: int = 4
    max_tokens: int = 2048
    temperature_single: float = 0.0
    temperature_ssc_sample: float = 0.8
    temperature_ssc_summary: float = 0.0
    port: int = 7311

    def cutoff(self) -> date:
        try:
            return date.fromisoformat(self.cutoff_date)
        except ValueError as exc:
            raise ConfigError(f"cutoff_date must be YYYY-MM-DD, got {self.cutoff_date!r}") from exc

    def out_path(self, name: str) -> Path:
        return Path(self.output_dir) / name


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def load_config(path: str | Path) -> RunConfig:
    """Read a flat-key TOML file into a RunConfig; unknown keys are errors."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with path.open("rb") as handle:
        raw = tomllib.load(handle)
    unknown = set(raw) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return replace(RunConfig(), **raw)


def apply_env_overrides(config: RunConfig) -> RunConfig:
    """Backend URL and credential from the environment win over the file."""
    updates: dict[str, object] = {}
    if os.environ.get(ENV_BASE_URL):
        updates["backend_url"] = os.environ[ENV_BASE_URL]
    if os.environ.get(ENV_API_KEY):
        updates["api_key"] = os.environ[ENV_API_KEY]
    return replace(config, **updates) if updates else config


def apply_overrides(config: RunConfig, overrides: dict[str, object]) -> RunConfig:
    """Flag overrides win over both file and environment."""
    cleaned = {k: v for k, v in overrides.items() if v is not None}
    unknown = set(cleaned) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config overrides: {sorted(unknown)}")
    return replace(config, **cleaned) if cleaned else config


def validate(config: RunConfig, need_inputs: bool = True) -> RunConfig:
    """Check value ranges, and input paths when the command reads them."""
    if config.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {config.mode!r}")
    if config.strategy not in STRATEGY_NAMES:
        raise ConfigError(f"strategy must be one of {STRATEGY_NAMES}, got {config.strategy!r}")
    if config.ranker not in RANKER_NAMES:
        raise ConfigError(f"ranker must be one of {RANKER_NAMES}, got {config.ranker!r}")
    for name in ("max_history_len", "ssc_k", "oversample_factor", "max_concurrency", "max_tokens"):
        if getattr(config, name) < 1:
            raise ConfigError(f"{name} must be >= 1")
    if config.max_retries < 0:
        raise ConfigError("max_retries must be >= 0")
    if not 0 <= config.port <= 65535:
        raise ConfigError(f"port must be in [0, 65535], got {config.port}")
    for name in ("temperature_single", "temperature_ssc_sample", "temperature_ssc_summary"):
        if getattr(config, name) < 0:
            raise ConfigError(f"{name} must be >= 0")
    if need_inputs:
        for attr in ("catalog_path", "interactions_path"):
            if not Path(getattr(config, attr)).exists():
                raise ConfigError(f"{attr} does not exist: {getattr(config, attr)}")
        if config.ranker == "file":
            if not config.baseline_scores_path:
                raise ConfigError("ranker 'file' needs baseline_scores_path")
            if not Path(config.baseline_scores_path).exists():
                raise ConfigError(f"baseline_scores_path does not exist: {config.baseline_scores_path}")
        if config.templates_dir and not Path(config.templates_dir).is_dir():
            raise ConfigError(f"templates_dir does not exist: {config.templates_dir}")
        if config.mock_script_path and not Path(config.mock_script_path).exists():
            raise ConfigError(f"mock_script_path does not exist: {config.mock_script_path}")
    return config

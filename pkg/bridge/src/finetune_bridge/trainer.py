"""Stage dispatch: sft, grpo, or the sft-then-grpo hybrid schedule."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .config import TrainConfig
from .grpo import GrpoResult, train_grpo
from .sft import SftResult, train_sft


@dataclass(frozen=True)
class TrainOutcome:
    stage: str
    sft: SftResult | None
    grpo: GrpoResult | None


def train(
    config: TrainConfig,
    sft_path: str | Path | None = None,
    grpo_path: str | Path | None = None,
) -> TrainOutcome:
    if config.stage == "sft":
        if sft_path is None:
            raise ValueError("stage 'sft' needs an sft corpus path")
        return TrainOutcome(stage="sft", sft=train_sft(sft_path, config), grpo=None)

    if config.stage == "grpo":
        if grpo_path is None:
            raise ValueError("stage 'grpo' needs a grpo corpus path")
        return TrainOutcome(stage="grpo", sft=None, grpo=train_grpo(grpo_path, config))

    # sft_then_grpo: GRPO resumes from the adapter the SFT stage saved.
    if sft_path is None or grpo_path is None:
        raise ValueError("stage 'sft_then_grpo' needs both corpus paths")
    base = Path(config.output_dir)
    sft_result = train_sft(sft_path, replace(config, output_dir=str(base / "sft")))
    grpo_result = train_grpo(
        grpo_path,
        replace(
            config,
            output_dir=str(base / "grpo"),
            init_adapter_dir=str(sft_result.adapter_dir),
        ),
    )
    return TrainOutcome(stage="sft_then_grpo", sft=sft_result, grpo=grpo_result)

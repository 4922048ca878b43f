"""Training configuration for the bridge."""

from __future__ import annotations

from dataclasses import dataclass

STAGES = ("sft", "grpo", "sft_then_grpo")


@dataclass(frozen=True)
class TrainConfig:
    model_ref: str = "toy-gpt-micro"
    stage: str = "sft"
    epochs: int = 1  # single epoch by default to avoid overfitting small corpora
    group_size: int = 4
    learning_rate: float = 3e-3
    max_steps: int = 0  # 0 means no cap
    reward_endpoint: str = "http://127.0.0.1:7311/v1/reward"
    output_dir: str = "train_out"
    seed: int = 0
    batch_size: int = 8
    max_seq_len: int = 512
    max_prompt_tokens: int = 256  # long prompts keep their tail (the format contract)
    max_new_tokens: int = 16
    sampling_temperature: float = 1.0
    kl_coef: float = 0.02
    use_kl: bool = True
    init_adapter_dir: str | None = None

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.stage in ("grpo", "sft_then_grpo") and self.group_size < 2:
            raise ValueError(f"group_size must be >= 2 for GRPO, got {self.group_size}")
        if self.epochs < 1 or self.batch_size < 1 or self.max_new_tokens < 1:
            raise ValueError("epochs, batch_size and max_new_tokens must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")

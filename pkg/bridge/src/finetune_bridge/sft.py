"""Supervised fine-tuning on exported prompt/completion trajectories."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import TrainConfig
from .data import load_sft
from .errors import NonFiniteLoss
from .model import ToyCausalLM, build_example, masked_lm_loss, pad_batch, save_adapter


@dataclass(frozen=True)
class SftResult:
    losses: list[float]
    adapter_dir: Path
    log_path: Path


def train_sft(corpus_path: str | Path, config: TrainConfig) -> SftResult:
    """One epoch (default) of next-token training, loss masked to completions."""
    records = load_sft(corpus_path)
    torch.manual_seed(config.seed)
    model = ToyCausalLM(config.model_ref, seed=config.seed)
    optimizer = torch.optim.AdamW(model.adapter_parameters(), lr=config.learning_rate)

    examples = [
        build_example(r.prompt, r.completion, config.max_seq_len, config.max_prompt_tokens)
        for r in records
    ]
    order = list(range(len(examples)))
    rng = random.Random(config.seed)

    steps_per_epoch = math.ceil(len(examples) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps:
        total_steps = min(total_steps, config.max_steps)

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    log_path = output_dir / "train_log.jsonl"
    losses: list[float] = []

    model.train()
    with log_path.open("w", encoding="utf-8") as log:
        step = 0
        while step < total_steps:
            rng.shuffle(order)
            for batch_start in range(0, len(order), config.batch_size):
                if step >= total_steps:
                    break
                batch = [examples[i] for i in order[batch_start : batch_start + config.batch_size]]
                input_ids, labels = pad_batch(batch)
                logits = model(input_ids)
                loss = masked_lm_loss(logits, labels)
                if not torch.isfinite(loss):
                    raise NonFiniteLoss(f"loss became {loss.item()} at step {step}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(float(loss.item()))
                log.write(json.dumps({"step": step, "loss": losses[-1]}) + "\n")
                step += 1

    adapter_dir = save_adapter(model, output_dir / "adapter")
    return SftResult(losses=losses, adapter_dir=adapter_dir, log_path=log_path)

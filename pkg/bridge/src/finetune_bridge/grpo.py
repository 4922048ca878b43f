"""Group-relative policy optimization against the reward endpoint.

Each step samples a group of completions for one prompt, scores every
completion via the reward service, centers rewards within the group (scaled
by the group standard deviation with an epsilon floor), and applies a
policy-gradient update with an optional KL penalty against the starting
policy.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import TrainConfig
from .data import load_grpo
from .errors import NonFiniteLoss
from .model import (
    BOS_ID,
    ToyCausalLM,
    adapter_hash,
    decode,
    encode,
    load_adapter,
    save_adapter,
    sequence_logprob,
)
from .rewards import RewardClient

ADVANTAGE_STD_FLOOR = 1e-6


@dataclass(frozen=True)
class GrpoStepDetail:
    step: int
    task_id: str
    completions: tuple[str, ...]
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    mean_reward: float


@dataclass(frozen=True)
class GrpoResult:
    mean_rewards: list[float]
    details: list[GrpoStepDetail]
    adapter_dir: Path
    log_path: Path
    initial_adapter_hash: str


def group_advantages(rewards: list[float], std_floor: float = ADVANTAGE_STD_FLOOR) -> list[float]:
    """Mean-centered rewards scaled by the group standard deviation (floored)."""
    mean = sum(rewards) / len(rewards)
    variance = sum((r - mean) ** 2 for r in rewards) / len(rewards)
    scale = max(variance**0.5, std_floor)
    return [(r - mean) / scale for r in rewards]


def _score_group(
    client: RewardClient, task_id: str, completions: list[str], group_size: int
) -> list[float]:
    # Concurrent calls, results kept in completion order by executor.map.
    with ThreadPoolExecutor(max_workers=group_size) as pool:
        return list(pool.map(lambda text: client.score(task_id, text), completions))


def train_grpo(
    corpus_path: str | Path,
    config: TrainConfig,
    client: RewardClient | None = None,
) -> GrpoResult:
    records = load_grpo(corpus_path)
    torch.manual_seed(config.seed)
    model = ToyCausalLM(config.model_ref, seed=config.seed)
    if config.init_adapter_dir:
        load_adapter(model, config.init_adapter_dir)
    initial_hash = adapter_hash(model)

    reference = ToyCausalLM(config.model_ref, seed=config.seed)
    if config.init_adapter_dir:
        load_adapter(reference, config.init_adapter_dir)
    reference.eval()

    client = client or RewardClient(config.reward_endpoint)
    optimizer = torch.optim.AdamW(model.adapter_parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(config.seed)

    order = list(range(len(records)))
    random.Random(config.seed).shuffle(order)
    total_steps = config.max_steps if config.max_steps else len(records)

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    log_path = output_dir / "train_log.jsonl"
    mean_rewards: list[float] = []
    details: list[GrpoStepDetail] = []

    model.train()
    with log_path.open("w", encoding="utf-8") as log:
        for step in range(total_steps):
            record = records[order[step % len(order)]]
            prompt_ids = [BOS_ID] + encode(record.prompt)[-config.max_prompt_tokens :]

            token_groups: list[list[int]] = []
            completions: list[str] = []
            for _ in range(config.group_size):
                tokens = model.sample(
                    prompt_ids, config.max_new_tokens, config.sampling_temperature, generator
                )
                token_groups.append(tokens)
                completions.append(decode(tokens))

            rewards = _score_group(client, record.task_id, completions, config.group_size)
            advantages = group_advantages(rewards)

            policy_terms = []
            kl_terms = []
            for tokens, advantage in zip(token_groups, advantages):
                if not tokens:
                    continue  # empty completion has no tokens to credit
                logprob = sequence_logprob(model, prompt_ids, tokens)
                policy_terms.append(-advantage * logprob)
                if config.use_kl:
                    with torch.no_grad():
                        ref_logprob = sequence_logprob(reference, prompt_ids, tokens)
                    kl_terms.append(logprob - ref_logprob)

            if policy_terms:
                loss = torch.stack(policy_terms).mean()
                if kl_terms:
                    loss = loss + config.kl_coef * torch.stack(kl_terms).mean()
                if not torch.isfinite(loss):
                    raise NonFiniteLoss(f"loss became {loss.item()} at step {step}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

            mean_reward = sum(rewards) / len(rewards)
            mean_rewards.append(mean_reward)
            details.append(
                GrpoStepDetail(
                    step=step,
                    task_id=record.task_id,
                    completions=tuple(completions),
                    rewards=tuple(rewards),
                    advantages=tuple(advantages),
                    mean_reward=mean_reward,
                )
            )
            log.write(json.dumps({"step": step, "mean_reward": mean_reward}) + "\n")

    adapter_dir = save_adapter(model, output_dir / "adapter")
    return GrpoResult(
        mean_rewards=mean_rewards,
        details=details,
        adapter_dir=adapter_dir,
        log_path=log_path,
        initial_adapter_hash=initial_hash,
    )

"""Command-line entry point for the bridge trainer."""

from __future__ import annotations

import argparse
import sys

from .config import STAGES, TrainConfig
from .errors import BridgeError
from .trainer import train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finetune-bridge", description="Toy-scale SFT/GRPO trainer")
    parser.add_argument("--stage", choices=STAGES, default="sft")
    parser.add_argument("--sft", help="path to sft.jsonl")
    parser.add_argument("--grpo", help="path to grpo.jsonl")
    parser.add_argument("--model-ref", default="toy-gpt-micro")
    parser.add_argument("--reward-endpoint", default="http://127.0.0.1:7311/v1/reward")
    parser.add_argument("--output-dir", default="train_out")
    parser.add_argument("--epochs", type=int, default=1)
    parser.add_argument("--group-size", type=int, default=4)
    parser.add_argument("--learning-rate", type=float, default=3e-3)
    parser.add_argument("--max-steps", type=int, default=0)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--max-new-tokens", type=int, default=16)
    parser.add_argument("--kl-coef", type=float, default=0.02)
    parser.add_argument("--no-kl", action="store_true")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--init-adapter-dir")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = TrainConfig(
        model_ref=args.model_ref,
        stage=args.stage,
        epochs=args.epochs,
        group_size=args.group_size,
        learning_rate=args.learning_rate,
        max_steps=args.max_steps,
        reward_endpoint=args.reward_endpoint,
        output_dir=args.output_dir,
        seed=args.seed,
        batch_size=args.batch_size,
        max_new_tokens=args.max_new_tokens,
        kl_coef=args.kl_coef,
        use_kl=not args.no_kl,
        init_adapter_dir=args.init_adapter_dir,
    )
    try:
        outcome = train(config, sft_path=args.sft, grpo_path=args.grpo)
    except (BridgeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if outcome.sft is not None:
        print(f"sft: {len(outcome.sft.losses)} steps, final loss {outcome.sft.losses[-1]:.4f}, adapter at {outcome.sft.adapter_dir}")
    if outcome.grpo is not None:
        print(
            f"grpo: {len(outcome.grpo.mean_rewards)} steps, final mean reward "
            f"{outcome.grpo.mean_rewards[-1]:.3f}, adapter at {outcome.grpo.adapter_dir}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

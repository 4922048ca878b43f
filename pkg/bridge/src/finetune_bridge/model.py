"""Toy causal language model with low-rank adapters.

The base transformer is randomly initialized from the config seed and kept
frozen; training touches only the adapter parameters (low-rank deltas on
every linear layer plus the output bias and final norm). No pretrained
weights are involved, so everything runs offline and deterministically.
Tokenization is byte-level with BOS/EOS/PAD specials.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ModelLoadError

VOCAB_SIZE = 259
BOS_ID = 256
EOS_ID = 257
PAD_ID = 258
IGNORE_INDEX = -100

MODEL_PRESETS: dict[str, dict[str, int]] = {
    "toy-gpt-micro": {"d_model": 64, "n_heads": 4, "n_layers": 2, "d_ff": 128, "max_seq_len": 512},
    "toy-gpt-mini": {"d_model": 128, "n_heads": 4, "n_layers": 4, "d_ff": 256, "max_seq_len": 768},
}

LORA_RANK = 4
LORA_ALPHA = 8.0


def encode(text: str) -> list[int]:
    return list(text.encode("utf-8", errors="replace"))


def decode(ids: list[int]) -> str:
    return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


class LoraLinear(nn.Module):
    """Frozen linear layer plus a trainable low-rank delta."""

    def __init__(self, base: nn.Linear, rank: int = LORA_RANK, alpha: float = LORA_ALPHA) -> None:
        super().__init__()
        self.base = base
        for parameter in self.base.parameters():
            parameter.requires_grad_(False)
        self.lora_a = nn.Parameter(torch.zeros(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))
        self.scaling = alpha / rank

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + F.linear(F.linear(x, self.lora_a), self.lora_b) * self.scaling


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int, d_ff: int) -> None:
        super().__init__()
        self.n_heads = n_heads
        self.norm1 = nn.LayerNorm(d_model)
        self.qkv = LoraLinear(nn.Linear(d_model, 3 * d_model))
        self.proj = LoraLinear(nn.Linear(d_model, d_model))
        self.norm2 = nn.LayerNorm(d_model)
        self.up = LoraLinear(nn.Linear(d_model, d_ff))
        self.down = LoraLinear(nn.Linear(d_ff, d_model))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, seq, d_model = x.shape
        head_dim = d_model // self.n_heads
        qkv = self.qkv(self.norm1(x))
        q, k, v = qkv.split(d_model, dim=-1)
        q = q.view(batch, seq, self.n_heads, head_dim).transpose(1, 2)
        k = k.view(batch, seq, self.n_heads, head_dim).transpose(1, 2)
        v = v.view(batch, seq, self.n_heads, head_dim).transpose(1, 2)
        attn = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        attn = attn.transpose(1, 2).reshape(batch, seq, d_model)
        x = x + self.proj(attn)
        x = x + self.down(F.gelu(self.up(self.norm2(x))))
        return x


class ToyCausalLM(nn.Module):
    def __init__(self, model_ref: str, seed: int = 0) -> None:
        super().__init__()
        if model_ref not in MODEL_PRESETS:
            raise ModelLoadError(
                f"unknown model_ref {model_ref!r}; available: {sorted(MODEL_PRESETS)}"
            )
        preset = MODEL_PRESETS[model_ref]
        self.model_ref = model_ref
        self.max_seq_len = preset["max_seq_len"]
        torch.manual_seed(seed)  # base weights are derived from the seed alone
        self.token_embedding = nn.Embedding(VOCAB_SIZE, preset["d_model"])
        self.position_embedding = nn.Embedding(preset["max_seq_len"], preset["d_model"])
        self.blocks = nn.ModuleList(
            Block(preset["d_model"], preset["n_heads"], preset["d_ff"])
            for _ in range(preset["n_layers"])
        )
        self.final_norm = nn.LayerNorm(preset["d_model"])
        self.lm_head = LoraLinear(nn.Linear(preset["d_model"], VOCAB_SIZE))

        for name, parameter in self.named_parameters():
            parameter.requires_grad_(self._is_adapter_param(name))

    @staticmethod
    def _is_adapter_param(name: str) -> bool:
        return (
            "lora_a" in name
            or "lora_b" in name
            or name.startswith("final_norm.")
            or name == "lm_head.base.bias"
        )

    def adapter_state(self) -> dict[str, torch.Tensor]:
        return {
            name: parameter.detach().clone()
            for name, parameter in self.named_parameters()
            if self._is_adapter_param(name)
        }

    def load_adapter_state(self, state: dict[str, torch.Tensor]) -> None:
        own = dict(self.named_parameters())
        missing = set(state) - set(own)
        if missing:
            raise ModelLoadError(f"adapter state has unknown parameters: {sorted(missing)}")
        with torch.no_grad():
            for name, tensor in state.items():
                own[name].copy_(tensor)

    def adapter_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def forward(self, input_ids: torch.Tensor) -> torch.Tensor:
        seq = input_ids.shape[1]
        if seq > self.max_seq_len:
            raise ValueError(f"sequence length {seq} exceeds max {self.max_seq_len}")
        positions = torch.arange(seq, device=input_ids.device)
        x = self.token_embedding(input_ids) + self.position_embedding(positions)
        for block in self.blocks:
            x = block(x)
        return self.lm_head(self.final_norm(x))

    @torch.no_grad()
    def sample(
        self,
        prompt_ids: list[int],
        max_new_tokens: int,
        temperature: float,
        generator: torch.Generator,
    ) -> list[int]:
        """Temperature sampling; stops early on EOS. Returns new token ids."""
        ids = list(prompt_ids)
        new_tokens: list[int] = []
        for _ in range(max_new_tokens):
            window = ids[-self.max_seq_len :]
            logits = self(torch.tensor([window], dtype=torch.long))[0, -1]
            if temperature <= 0:
                next_id = int(torch.argmax(logits).item())
            else:
                probs = F.softmax(logits / temperature, dim=-1)
                next_id = int(torch.multinomial(probs, 1, generator=generator).item())
            if next_id == EOS_ID:
                break
            ids.append(next_id)
            new_tokens.append(next_id)
        return new_tokens


def build_example(
    prompt: str, completion: str, max_seq_len: int, max_prompt_tokens: int
) -> tuple[list[int], list[int]]:
    """Token ids and next-token labels with prompt positions masked out.

    Long prompts keep their tail so the output-format instructions survive
    truncation. Labels cover completion tokens plus EOS only.
    """
    prompt_ids = [BOS_ID] + encode(prompt)[-max_prompt_tokens:]
    completion_ids = encode(completion) + [EOS_ID]
    ids = (prompt_ids + completion_ids)[:max_seq_len]
    labels = [IGNORE_INDEX] * len(ids)
    for position in range(len(prompt_ids) - 1, len(ids) - 1):
        labels[position] = ids[position + 1]
    return ids, labels


def masked_lm_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Cross entropy over label positions only; masked positions contribute zero."""
    return F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), labels.reshape(-1), ignore_index=IGNORE_INDEX
    )


def pad_batch(examples: list[tuple[list[int], list[int]]]) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(ids) for ids, _ in examples)
    input_ids = torch.full((len(examples), width), PAD_ID, dtype=torch.long)
    labels = torch.full((len(examples), width), IGNORE_INDEX, dtype=torch.long)
    for row, (ids, labs) in enumerate(examples):
        input_ids[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        labels[row, : len(labs)] = torch.tensor(labs, dtype=torch.long)
    return input_ids, labels


def sequence_logprob(model: ToyCausalLM, prompt_ids: list[int], token_ids: list[int]) -> torch.Tensor:
    """Mean log-probability of token_ids given the prompt, differentiable."""
    ids = (prompt_ids + token_ids)[-model.max_seq_len :]
    n_new = min(len(token_ids), len(ids) - 1)
    logits = model(torch.tensor([ids], dtype=torch.long))[0]
    logprobs = F.log_softmax(logits, dim=-1)
    picked = []
    for offset in range(n_new):
        position = len(ids) - n_new - 1 + offset
        picked.append(logprobs[position, ids[position + 1]])
    return torch.stack(picked).mean()


def save_adapter(model: ToyCausalLM, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.adapter_state(), directory / "adapter.pt")
    (directory / "adapter_config.json").write_text(
        json.dumps({"model_ref": model.model_ref, "rank": LORA_RANK, "alpha": LORA_ALPHA}),
        encoding="utf-8",
    )
    return directory


def load_adapter(model: ToyCausalLM, directory: str | Path) -> None:
    directory = Path(directory)
    weights_path = directory / "adapter.pt"
    if not weights_path.exists():
        raise ModelLoadError(f"no adapter weights at {weights_path}")
    config_path = directory / "adapter_config.json"
    if config_path.exists():
        stored = json.loads(config_path.read_text(encoding="utf-8"))
        if stored.get("model_ref") != model.model_ref:
            raise ModelLoadError(
                f"adapter was trained for {stored.get('model_ref')!r}, model is {model.model_ref!r}"
            )
    model.load_adapter_state(torch.load(weights_path, weights_only=True))


def adapter_hash(state_or_model: ToyCausalLM | dict[str, torch.Tensor]) -> str:
    """Stable content hash of adapter weights, for lineage checks."""
    state = (
        state_or_model.adapter_state()
        if isinstance(state_or_model, ToyCausalLM)
        else state_or_model
    )
    digest = hashlib.sha256()
    for name in sorted(state):
        digest.update(name.encode("utf-8"))
        digest.update(state[name].detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()

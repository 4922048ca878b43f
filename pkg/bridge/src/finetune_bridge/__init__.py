"""Toy-scale SFT/GRPO trainer for exported re-ranking corpora."""

__version__ = "0.1.0"

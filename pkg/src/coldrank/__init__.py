"""Cold-start item re-ranking with LLM reasoning strategies."""

__version__ = "0.1.0"

"""Budgeted active distillation from an LLM teacher into a small session recommender."""

__version__ = "0.1.0"

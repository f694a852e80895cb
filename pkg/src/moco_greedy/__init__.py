"""Greedy batch selection with set-conditioned policies for multi-objective sequence design."""

__version__ = "0.1.0"

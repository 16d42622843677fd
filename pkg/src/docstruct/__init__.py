"""Sentence-structure induction and summary analysis."""

__version__ = "0.1.0"

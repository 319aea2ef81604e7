"""Criterion-validity analysis for multi-dimensional rubric scores."""

__version__ = "0.1.0"

"""Bayesian optimization with a GP surrogate collaborating with a suggestion agent."""

__version__ = "0.1.0"

"""Coupling and total-variation tools for Levy-driven Ornstein-Uhlenbeck processes."""

__version__ = "0.1.0"

"""Distributed tracking of a moving target with dynamic-regret accounting."""

__version__ = "0.1.0"

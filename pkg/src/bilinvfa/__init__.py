"""Approximate bilinear programming for value function approximation in MDPs."""

__version__ = "0.1.0"

"""Periodic two-boundary Bernoulli free-boundary solver by monotone trial-free-boundary iteration."""

__version__ = "0.1.0"

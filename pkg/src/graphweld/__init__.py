"""Probabilistic alignment of accounts across social networks."""

__version__ = "0.1.0"

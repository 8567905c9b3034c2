"""Synthetic underwater dataset generation, domain adaptation and colour restoration."""

__version__ = "0.1.0"

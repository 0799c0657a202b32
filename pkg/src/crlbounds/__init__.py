"""Generalization bounds for contrastive representation learning, with exact and Monte Carlo checks."""

__version__ = "0.1.0"

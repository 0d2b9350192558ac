"""Hierarchical contrastive representation learning for time series."""

__version__ = "0.1.0"

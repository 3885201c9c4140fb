"""Partitions of truncated Lassak covers in R^4 into eight parts of diameter below one."""

__version__ = "0.1.0"

"""Correlated clustering and projection (CCP) for expression matrices."""

__version__ = "0.1.0"

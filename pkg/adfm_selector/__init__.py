"""Decentralized fixed-mode analysis and overlapping interaction selection."""

__version__ = "0.1.0"

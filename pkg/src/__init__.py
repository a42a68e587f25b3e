"""Bias/MAD trade-off verification toolkit"""

__version__ = "0.3.0"

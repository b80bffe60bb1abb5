"""Disintegration of probability measures along random ball covers."""

__version__ = "0.1.0"

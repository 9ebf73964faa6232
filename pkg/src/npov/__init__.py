"""Detect subjective framing in text and rewrite it to a neutral register."""

__version__ = "0.1.0"

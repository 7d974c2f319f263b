"""Diverse-team self-play search on small exactly solvable games."""

__version__ = "0.1.0"

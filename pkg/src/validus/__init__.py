"""Validity properties for Byzantine consensus: classify them, and run the
protocols that solve them in a deterministic simulator."""

__version__ = "0.1.0"

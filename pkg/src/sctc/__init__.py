"""Spatially coupled turbo-like codes on the binary erasure channel."""

__version__ = "0.1.0"

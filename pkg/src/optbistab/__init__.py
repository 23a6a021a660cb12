"""Optical bistability of a four-level N-type atomic medium in a ring cavity."""

__version__ = "0.1.0"

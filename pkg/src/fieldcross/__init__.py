"""Tail approximations for maxima and boundary crossings of Gaussian-like random fields."""

__version__ = "0.1.0"

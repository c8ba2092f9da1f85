"""Successive concave approximation and its graph-based unfolding for
weighted sum energy efficiency power allocation."""

__version__ = "0.1.0"

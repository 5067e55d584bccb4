"""Discretized incidence geometry at dyadic scales."""
__version__ = "0.1.0"

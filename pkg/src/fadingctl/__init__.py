"""Optimal state feedback over random-access MIMO fading channels."""

__version__ = "0.1.0"

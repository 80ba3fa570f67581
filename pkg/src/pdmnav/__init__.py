"""Pedestrian dominance modelling and dominance-aware crowd navigation."""

__version__ = "0.1.0"

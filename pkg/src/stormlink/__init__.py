"""Tropical-cyclone center detection and track linking on 0.25-degree grids."""

__version__ = "0.1.0"

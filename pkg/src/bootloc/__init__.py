"""Iterated localization, grid bootstrap percolation and the virtual-grid coupling."""

__version__ = "0.1.0"

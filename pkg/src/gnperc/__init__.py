"""Generalised nearest-neighbour continuum percolation: sampling, graphs and estimators."""

__version__ = "0.1.0"

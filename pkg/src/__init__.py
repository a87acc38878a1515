"""Delaunay weighted two-sample test for data on low-dimensional manifolds."""

__version__ = "0.1.0"

"""Tests for the Delaunay weighted test package."""

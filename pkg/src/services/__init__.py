"""Service modules: data, manifold learning, Delaunay weights and tests."""

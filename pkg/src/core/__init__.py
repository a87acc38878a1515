"""Core modules: configuration, errors and result records."""

"""Command-line application module."""

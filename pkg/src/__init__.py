"""Bipartite interference HTE toolkit - Main package."""

__version__ = "0.1.0"

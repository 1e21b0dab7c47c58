"""Ultrafast extreme event detection and analytics."""

__version__ = "0.1.0"

"""Mood estimation pipeline: sensor model, query model, and log analytics."""

__version__ = "0.1.0"

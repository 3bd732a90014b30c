"""Estimate object configurations of a scene from a human pose trajectory."""

__version__ = "0.1.0"

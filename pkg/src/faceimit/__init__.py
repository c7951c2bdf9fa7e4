"""Morphology-independent facial expression imitation on a simulated face robot."""

__version__ = "0.1.0"

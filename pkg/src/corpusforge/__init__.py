"""Desk-scale speech corpus creation: alignment, segmentation, validation."""

__version__ = "0.1.0"

"""Desk-scale SE(3) trajectory-aligned behavior cloning."""

__version__ = "0.1.0"

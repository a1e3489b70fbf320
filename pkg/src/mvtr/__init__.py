"""Desk-scale multi-viewpoint teleoperation simulator."""

__version__ = "0.1.0"

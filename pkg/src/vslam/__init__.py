"""Monocular visual SLAM on unit bearing vectors."""

__version__ = "0.1.0"

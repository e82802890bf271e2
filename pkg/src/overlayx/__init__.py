"""Extraction of de-duplicated text overlays from video keyframes."""

__version__ = "0.1.0"

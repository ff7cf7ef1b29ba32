"""Desk-scale simulator of diffusion-based semantic image communication."""

__version__ = "0.1.0"

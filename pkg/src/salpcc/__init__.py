"""Saliency-aware geometry codec for static point clouds."""

__version__ = "0.1.0"

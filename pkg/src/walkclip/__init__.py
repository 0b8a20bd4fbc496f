"""Multimodal walkability regression with spatial feature enhancement."""

__version__ = "0.1.0"

"""Crop-health classification from vegetation indices with a from-scratch FCNN."""

__version__ = "0.1.0"

"""Vessel segmentation and stenosis analysis for angiography images."""
__version__ = "0.1.0"

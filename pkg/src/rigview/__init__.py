"""Stabilized single-view video synthesis from a movable multi-camera rig."""

__version__ = "0.1.0"

"""Brick-assembly guidance: plan compilation, planar vision geometry,
detection-to-expectation matching, and a realtime guidance session."""

__version__ = "0.1.0"

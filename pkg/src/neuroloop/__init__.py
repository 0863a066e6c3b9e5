"""Bit-accurate emulation of a reservoir neuromorphic seizure-forecasting loop."""

__version__ = "0.1.0"

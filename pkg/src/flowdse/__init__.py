"""Discrete-event simulation and design-space exploration for modular flow lines."""

__version__ = "0.1.0"

"""Discrete-event simulator for free-space B92 quantum key distribution."""

__version__ = "0.1.0"

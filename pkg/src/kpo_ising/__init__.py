"""Simulator for two coupled Kerr parametric oscillators under a Lindblad master equation."""

__version__ = "0.1.0"

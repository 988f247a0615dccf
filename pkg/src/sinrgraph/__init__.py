"""Simulation and oracle toolkit for the space-time SINR graph."""

__version__ = "0.1.0"

"""Simulation of barrier-function guided vision landing on a ground robot."""

__version__ = "0.1.0"

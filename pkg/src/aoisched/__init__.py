"""Simulation and optimization of age-of-information scheduling policies."""

__version__ = "0.1.0"

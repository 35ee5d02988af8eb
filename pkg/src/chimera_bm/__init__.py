"""Fully visible Boltzmann machines on Chimera-structured Ising models."""

__version__ = "0.1.0"

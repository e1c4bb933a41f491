"""Stochastic periodic porous microstructures."""
__version__ = "0.1.0"

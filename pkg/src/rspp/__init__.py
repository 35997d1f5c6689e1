"""Repulsive spatial point processes: simulation and doubly-intractable inference."""
__version__ = "0.1.0"

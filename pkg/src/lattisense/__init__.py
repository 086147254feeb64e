"""Voronoi-web lattice generation and simulated impedance-tomography damage sensing."""

__version__ = "0.1.0"

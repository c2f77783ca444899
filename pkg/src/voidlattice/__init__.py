"""Discrete elastic, surface and curvature energies of crystal lattices with voids.

Submodules are imported on demand so that the command line can cap thread
counts before numpy loads.
"""

__version__ = "0.1.0"

__all__ = ["lattice", "elastic", "surface", "curvature", "mesoscale", "gamma", "io", "sampling", "cli"]

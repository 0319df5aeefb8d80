"""Artificial-scattering discrete ordinates (as-SN) transport in two dimensions.

Modules
-------
quadrature  icosahedron quadrature sets on the unit sphere
kernels     artificial scattering kernel, scattering matrices, moment maps
mesh        structured grids, materials, initial conditions
explicit    second-order finite volume with Heun time stepping
implicit    implicit Euler with sweeps, source iteration and GMRES
stability   positive-definiteness check of the implicit upwind flux
benchmarks  line source, lattice, Monte Carlo reference, error metrics
cli         command-line entry point (``assn``)
"""
from .quadrature import QuadratureSet, build_icosahedron_quadrature
from .mesh import Grid2D, MaterialField

__all__ = ["QuadratureSet", "build_icosahedron_quadrature", "Grid2D", "MaterialField"]
__version__ = "0.1.0"

"""Damped Robin and acoustic-boundary wave equations in one space dimension.

Modules
-------
mesh        uniform grid, inner products and phase-space norms
operators   Robin Laplacian, generators R and A_eps, adjoints, eigenpairs
model       nonlinearity catalog, energies, the functional E0
integrate   energy-exact time stepping and the semiflow decomposition
dynamics    lift/projection, gap sweeps, fits, absorbing sets, clouds
cli         configuration-driven experiment runner
"""
from .mesh import Mesh, build_mesh, inner, norm_phase
from .state import StateA, StateR

__version__ = "0.1.0"

__all__ = ["Mesh", "build_mesh", "inner", "norm_phase", "StateR", "StateA", "__version__"]

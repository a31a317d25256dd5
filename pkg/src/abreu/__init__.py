"""Numerical laboratory for second boundary value problems of Abreu type.

Modules
-------
numerics      adaptive quadrature, bracketed roots, monotone inversion
radial        compatibility roots and radial profiles
operators     cofactors, S_k, right-hand-side families, trace inequalities
disk          Shortley-Weller finite differences and quadrature on the unit disk
grid_solver   coupled 2D solver
verify        energy, maximum principles, monotonicity, cross-validation
io, cli       CSV/JSON files and the command line
"""

from .io import package_version

__version__ = package_version()

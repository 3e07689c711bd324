"""Nonlocal geometric functionals and their local limits.

Numerical library for kernel-weighted perimeters, total variations,
curvatures and rate energies, their concentration rescalings, and
desk-scale experiments confirming the corresponding local asymptotics.
"""

__version__ = "0.1.0"

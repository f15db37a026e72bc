"""Numerical laboratory for Regge-Wheeler type wave equations.

Modules
-------
background   tortoise maps, potentials, condition checks, trapping cutoff
harmonics    mode sets, powers of L, axisymmetric synthesis
evolve       grids, initial data, leapfrog evolution, checkpoints
functionals  energy, conformal charge, weighted norms, accumulators
observables  discrete operators, commutators, positivity certificates
cli          configuration-driven runs
"""

__version__ = "0.1.0"

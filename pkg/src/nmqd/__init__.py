"""Stochastic evolution-operator construction for open quantum dynamics.

Pipeline: bath correlation decomposition -> correlated noise -> hierarchy
solvers (wavefunction and density-matrix) -> operator learner -> spectra,
dynamical maps, and long-time propagation.
"""

__version__ = "0.1.0"

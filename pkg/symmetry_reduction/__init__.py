"""Sigma-symmetries of dynamical systems: symmetry checks, reductions and DS/ODE transfer."""

__version__ = "0.1.0"

"""Numerics for the coupled cubic Schrodinger system of third-harmonic generation.

Submodules: ``grid`` (periodic spectral grids), ``functionals`` (mass,
energy, virial and friends), ``groundstate`` (Nehari minimization),
``evolution`` (split-step integrator), ``criteria`` (existence and blow-up
decisions), ``spectra`` (linearized operators) and ``cli``.
"""

__version__ = "0.1.0"

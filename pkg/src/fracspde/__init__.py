"""Pathwise fractional calculus and mild-solution solvers on (0, 1).

Modules
-------
core       grids, sampled paths, sine-basis vectors and transforms
fraccalc   Riemann-Liouville integrals, Weyl-Marchaud derivatives
stieltjes  the Zähle forward integral and fractional ODEs
noise      fBm, fractional Brownian sheets, Hölder estimators
semigroup  the Dirichlet heat semigroup and its functional calculus
mild       admissibility, weighted norms, heat and transport solvers
burgers    Cole-Hopf pipeline for a noisy Burgers equation
cli        command-line frontend
"""
__version__ = "0.1.0"

from .core import (FracSpdeError, NumericalError, ResolutionError, SampledPath, SpaceTimeField,
                   SpectralVector, UniformGrid, ValidationError)

__all__ = ["FracSpdeError", "NumericalError", "ResolutionError", "SampledPath", "SpaceTimeField",
           "SpectralVector", "UniformGrid", "ValidationError", "__version__"]

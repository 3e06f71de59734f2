"""Hopf-Lax flow machinery for absolutely minimizing functions.

Library layout:

- :mod:`hlx.fields` -- grid fields with boundary masks and CSV I/O
- :mod:`hlx.hamiltonian` -- convex Hamiltonians, Legendre transforms,
  coercivity data and locality times
- :mod:`hlx.geometry` -- cone functions, subdifferentials and the dual
  neighborhoods they generate
- :mod:`hlx.hopflax` -- discrete sup/inf-convolution flow operators
- :mod:`hlx.criteria` -- convexity/cone-comparison checkers and slope fields
- :mod:`hlx.patching` -- low-slope patching construction
- :mod:`hlx.solver` -- discrete Dirichlet solver and comparison harness
- :mod:`hlx.aronsson` -- degenerate-elliptic subsolution residual
- :mod:`hlx.harness` -- CLI and experiment runner
"""

from hlx.fields import ScalarField
from hlx.hamiltonian import HamiltonianModel

__all__ = ["ScalarField", "HamiltonianModel"]

__version__ = "0.1.0"

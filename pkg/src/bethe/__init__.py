"""Random Schrodinger operators on the rooted Bethe lattice.

The subpackages cover the lattice and its shifts, counter-based disorder,
finite-volume operators, Green's functions, spectral measures, and the
Lyapunov / Thouless remainder.
"""

from .errors import BetheError, NumericalError, SizeGuardError, ValidationError
from .lattice import BetheLattice, format_vertex, parse_vertex
from .ergodic import DisorderRealization, DisorderSpec
from .operator import FiniteOperator, Region, assemble

__version__ = "0.1.0"

__all__ = [
    "BetheError",
    "BetheLattice",
    "DisorderRealization",
    "DisorderSpec",
    "FiniteOperator",
    "NumericalError",
    "Region",
    "SizeGuardError",
    "ValidationError",
    "assemble",
    "format_vertex",
    "parse_vertex",
]

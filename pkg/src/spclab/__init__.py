"""spclab: desk-scale numerics for overcritical radial Dirac wells.

Bound-state diving through the mass gap, near-threshold resonance profiles of
the continuum eigenfunctions, decay-time laws and their adiabatic-parameter
scaling, and the short-overcriticality scattering probability.
"""

from .core import (
    PotentialModel,
    RadialGrid,
    RadialSpinor,
    DiscreteOperator,
    Units,
    assemble_operator,
    build_grid,
    inner_product,
    potential_at,
)

__all__ = [
    "PotentialModel",
    "RadialGrid",
    "RadialSpinor",
    "DiscreteOperator",
    "Units",
    "assemble_operator",
    "build_grid",
    "inner_product",
    "potential_at",
]

__version__ = "0.1.0"

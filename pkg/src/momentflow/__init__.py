"""momentflow: moment relaxations for stochastic control and transport.

The package turns polynomial stochastic control problems -- steer a
diffusion from an initial distribution toward a terminal one while paying a
running cost -- into finite conic programs over truncated moment sequences,
solves them with an interior-point method, and post-processes moments,
value-function certificates and data-driven (Christoffel) costs.
"""

from .conic import (
    ConeBlock,
    ConicProgram,
    ConicSolution,
    SelfCheckReport,
    self_check,
    smat,
    svec,
    write_program,
)
from .generator import DynamicsSpec, apply_generator, generator_degree_shift
from .ipm import SolverSettings, solve
from .moments import (
    MeasureSpec,
    MomentVector,
    SupportSet,
    boundary_moments,
    localizing_matrix,
    moment_matrix,
)
from .poly import Polynomial, VariableSpace, monomial_basis, parse_polynomial

__all__ = [
    "ConeBlock",
    "ConicProgram",
    "ConicSolution",
    "DynamicsSpec",
    "MeasureSpec",
    "MomentVector",
    "Polynomial",
    "SelfCheckReport",
    "SolverSettings",
    "SupportSet",
    "VariableSpace",
    "apply_generator",
    "boundary_moments",
    "generator_degree_shift",
    "localizing_matrix",
    "moment_matrix",
    "monomial_basis",
    "parse_polynomial",
    "self_check",
    "smat",
    "svec",
    "solve",
    "write_program",
]

__version__ = "0.1.0"

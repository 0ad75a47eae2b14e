"""Positive steady states of the logistic elliptic equation with sublinear boundary harvesting.

    -Δu = u - |u|^{p-1} u   in Ω,      ∂u/∂ν = -λ u^q   on ∂Ω,

with 0 < q < 1 < p, discretized by linear (1D) and bilinear (2D) finite
elements on intervals and rectangles.
"""
from .assembly import AssembledForms, Field, ProblemParams, assemble
from .errors import (
    ConfigError,
    LogibranchError,
    PreconditionError,
    SolverError,
)
from .mesh import DomainSpec, build_mesh, parse_domain

__version__ = "0.1.0"

__all__ = [
    "AssembledForms",
    "ConfigError",
    "DomainSpec",
    "Field",
    "LogibranchError",
    "PreconditionError",
    "ProblemParams",
    "SolverError",
    "assemble",
    "build_mesh",
    "parse_domain",
    "__version__",
]

"""Reflection symmetry detection in d-dimensional point sets.

The mirror is fitted by alternating an exact assignment of mirror partners
with Riemannian trust-region steps over a product of rotations and a
translation.
"""
from .assignment import AssignmentProblem, solve_assignment, solve_assignment_capped
from .geometry import (
    ContractError,
    Correspondence,
    DegenerateTransformError,
    Hyperplane,
    PointCloud,
    ReflectionTransform,
    hyperplane_from_transform,
    reflect_points,
    symmetry_error,
)
from .pipeline import DetectConfig, InitializationFailure, SymmetryResult, detect
from .solver import NumericalFailure, SolveReport, TrustRegionConfig, solve_transform
from .synthbench import SynthSpec, generate

__all__ = [
    "AssignmentProblem",
    "ContractError",
    "Correspondence",
    "DegenerateTransformError",
    "DetectConfig",
    "Hyperplane",
    "InitializationFailure",
    "NumericalFailure",
    "PointCloud",
    "ReflectionTransform",
    "SolveReport",
    "SymmetryResult",
    "SynthSpec",
    "TrustRegionConfig",
    "detect",
    "generate",
    "hyperplane_from_transform",
    "reflect_points",
    "solve_assignment",
    "solve_assignment_capped",
    "solve_transform",
    "symmetry_error",
]

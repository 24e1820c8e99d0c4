"""Density-based topology optimization of fluid-structure interaction in 2D.

Q2Q1 Brinkman-penalized Navier-Stokes, plane-strain elasticity and a
pseudo-elastic fluid mesh, coupled by a staggered solver, with discrete
adjoint sensitivities and a robust MMA optimization loop.
"""
from .coupling import CoupledState, CouplerConfig, FSIProblem
from .errors import ConfigError, CouplingError, GeometryError, SolverError, TofsiError
from .grid import GeometryConfig, StructuredGrid, build_grid
from .materials import DensityFilter, InterpolationParams, ProjectionParams, robust_triplet
from .optimize import OptimizerConfig, run_optimization

__version__ = "0.1.0"

__all__ = [
    "CoupledState", "CouplerConfig", "FSIProblem", "ConfigError", "CouplingError", "GeometryError",
    "SolverError", "TofsiError", "GeometryConfig", "StructuredGrid", "build_grid", "DensityFilter",
    "InterpolationParams", "ProjectionParams", "robust_triplet", "OptimizerConfig", "run_optimization",
]

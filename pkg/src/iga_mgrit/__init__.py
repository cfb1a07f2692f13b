"""Parallel-in-time heat equation solver: IgA in space, MGRIT in time, p-multigrid spatial solves."""
from .geometry import GeometryMap
from .mgrit import HierarchyError, MgritConfig, MgritResult, MgritSolver, mgrit_solve
from .multigrid import PMultigrid, SpatialDiscretization
from .time_integration import (ProblemSpec, SolverConfig, SpatialSolverError, manufactured_problem,
                               sequential_integrate)

__all__ = ["GeometryMap", "HierarchyError", "MgritConfig", "MgritResult", "MgritSolver", "mgrit_solve",
           "PMultigrid", "SpatialDiscretization", "ProblemSpec", "SolverConfig", "SpatialSolverError",
           "manufactured_problem", "sequential_integrate"]
__version__ = "0.1.0"

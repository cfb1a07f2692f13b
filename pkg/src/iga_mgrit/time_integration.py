"""theta-scheme time stepping for the semi-discrete heat equation.

Every step solves ``(M + kappa dt theta K) u_{k+1} = (M - kappa dt (1 - theta) K) u_k + b_k``
with ``b_k = dt (theta f(t_{k+1}) + (1 - theta) f(t_k))`` on the free dofs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as K
from .assembly import LoadAssembler
from .geometry import GeometryMap
from .linalg import as_csr, csr_arrays
from .multigrid import PMultigrid, SpatialDiscretization

THETA_NAMES = {0.0: "forward-euler", 0.5: "crank-nicolson", 1.0: "backward-euler"}


class SpatialSolverError(RuntimeError):
    """A spatial solve did not reach its tolerance."""

    def __init__(self, msg, level=None, step=None):
        super().__init__(msg)
        self.level = level
        self.step = step


def unit_source(x, y, t=0.0):
    return np.ones_like(x)


def zero_initial(x, y):
    return np.zeros_like(x)


@dataclass
class ProblemSpec:
    """Heat problem ``u_t - kappa Lap u = f`` with homogeneous Dirichlet data.

    Defaults are the benchmark setup: unit source, zero initial state,
    ``kappa = 1`` on ``[0, 0.1]``.
    """

    kappa: float = 1.0
    t_final: float = 0.1
    n_steps: int = 64
    theta: float = 1.0
    degree: int = 2
    mesh_exponent: int = 5
    geometry: str = "unit_square"
    source: Callable = unit_source      # f(x, y, t)
    initial: Callable | None = None     # u0(x, y); None means zero
    steady_source: bool = True

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.n_steps < 1 or self.t_final <= 0:
            raise ValueError("need a positive time interval and at least one step")
        if self.mesh_exponent < 0:
            raise ValueError("mesh exponent must be non-negative")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    @property
    def n_elements(self) -> int:
        return 2 ** self.mesh_exponent

    @property
    def scheme_name(self) -> str:
        return THETA_NAMES.get(float(self.theta), f"theta={self.theta}")

    def geometry_map(self) -> GeometryMap:
        return GeometryMap.from_name(self.geometry)

    def discretize(self) -> SpatialDiscretization:
        return SpatialDiscretization.build(self.degree, self.n_elements, self.geometry_map())


@dataclass
class SolverConfig:
    """Spatial solver choice and its parameters."""

    kind: str = "pmg"            # pmg | cg | direct
    rel_tol: float = 1e-12
    max_iter: int = 1000
    nu: int = 1
    gs_sweeps: int = 2
    ilut_tau: float = 1e-13
    ilut_fill: int | None = None
    fixed_cycles: int | None = None

    def __post_init__(self):
        if self.kind not in ("pmg", "cg", "direct"):
            raise ValueError(f"unknown spatial solver {self.kind!r}")


class CGSolver:
    def __init__(self, matrix, rel_tol=1e-12, max_iter=1000):
        self.matrix = as_csr(matrix)
        self._arrays = csr_arrays(self.matrix)
        self.dinv = 1.0 / self.matrix.diagonal()
        self.rel_tol = rel_tol
        self.max_iter = max_iter

    def solve(self, b, x0=None):
        b = np.ascontiguousarray(b, dtype=float)
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        hist = np.empty(self.max_iter + 1)
        its, conv = K.cg_kernel(*self._arrays, self.dinv, b, x, self.rel_tol, self.max_iter, hist)
        return x, abs(its), conv


class DirectSolver:
    """Sparse LU; a reference solver, not used by the benchmarks."""

    def __init__(self, matrix):
        self.matrix = as_csr(matrix)
        self._lu = spla.splu(self.matrix.tocsc())

    def solve(self, b, x0=None):
        return self._lu.solve(np.asarray(b, dtype=float)), 1, True


def make_solver(disc: SpatialDiscretization, coef: float, cfg: SolverConfig):
    if cfg.kind == "pmg":
        return PMultigrid(disc, coef, nu1=cfg.nu, nu2=cfg.nu, gs_pre=cfg.gs_sweeps,
                          gs_post=cfg.gs_sweeps, ilut_tau=cfg.ilut_tau, ilut_fill=cfg.ilut_fill,
                          rel_tol=cfg.rel_tol, max_iter=cfg.max_iter,
                          fixed_cycles=cfg.fixed_cycles)
    if cfg.kind == "cg":
        return CGSolver(disc.operator(coef), cfg.rel_tol, cfg.max_iter)
    return DirectSolver(disc.operator(coef))


@dataclass
class ThetaStepper:
    """One theta-scheme step ``u -> A_plus^{-1} (A_minus u + b)`` with step ``dt``."""

    a_plus: sp.csr_matrix
    a_minus: sp.csr_matrix
    dt: float
    theta: float
    solver: object
    _minus: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self._minus = csr_arrays(self.a_minus)

    @classmethod
    def build(cls, disc: SpatialDiscretization, kappa: float, dt: float, theta: float,
              cfg: SolverConfig) -> "ThetaStepper":
        coef = kappa * dt * theta
        a_plus = disc.operator(coef)
        a_minus = disc.mass if theta == 1.0 else as_csr(disc.mass - kappa * dt * (1.0 - theta) * disc.stiffness)
        return cls(a_plus, a_minus, dt, theta, make_solver(disc, coef, cfg))

    @property
    def n(self) -> int:
        return self.a_plus.shape[0]

    def rhs(self, u, load=None) -> np.ndarray:
        out = np.empty(self.n)
        K.csr_matvec(*self._minus, np.ascontiguousarray(u, dtype=float), out)
        if load is not None:
            out += load
        return out

    def step(self, u, load=None, x0=None, where=None):
        """Advance ``u`` by one step; returns ``(u_next, spatial_iterations)``."""
        x, its, conv = self.solver.solve(self.rhs(u, load), x0)
        if not conv:
            lvl, k = where if where is not None else (None, None)
            raise SpatialSolverError(f"spatial solver failed to converge (level {lvl}, step {k})", lvl, k)
        return x, its

    def solve(self, b, x0=None):
        """``A_plus^{-1} b``; used to convert right-hand sides to propagated form."""
        x, its, conv = self.solver.solve(b, x0)
        if not conv:
            raise SpatialSolverError("spatial solver failed to converge")
        return x, its


def theta_step(stepper: ThetaStepper, u_k, load=None):
    return stepper.step(u_k, load)[0]


def step_loads(ps: ProblemSpec, disc: SpatialDiscretization) -> np.ndarray:
    """Loads ``b_k`` for the steps ``k -> k + 1``, shape ``(n_steps, n_free)``."""
    assemble = LoadAssembler(disc.basis, disc.geometry)
    dm = disc.dofmap
    if ps.steady_source:
        f = dm.restrict_vector(assemble(lambda x, y: ps.source(x, y, 0.0)))
        return np.broadcast_to(ps.dt * f, (ps.n_steps, f.size)).copy()
    times = np.linspace(0.0, ps.t_final, ps.n_steps + 1)
    fs = np.stack([dm.restrict_vector(assemble(lambda x, y, t=t: ps.source(x, y, t))) for t in times])
    return ps.dt * (ps.theta * fs[1:] + (1.0 - ps.theta) * fs[:-1])


def project_initial(ps: ProblemSpec, disc: SpatialDiscretization) -> np.ndarray:
    """Consistent-mass L2 projection of the initial state onto the free space."""
    if ps.initial is None:
        return np.zeros(disc.n_free)
    rhs = disc.dofmap.restrict_vector(LoadAssembler(disc.basis, disc.geometry)(ps.initial))
    return spla.spsolve(disc.mass.tocsc(), rhs)


@dataclass
class SolveStats:
    spatial_solves: int = 0
    spatial_iterations: int = 0

    def add(self, solves: int, iterations: int):
        self.spatial_solves += solves
        self.spatial_iterations += iterations

    @property
    def mean_iterations(self) -> float:
        return self.spatial_iterations / self.spatial_solves if self.spatial_solves else 0.0


def sequential_integrate(ps: ProblemSpec, solver: SolverConfig | None = None,
                         disc: SpatialDiscretization | None = None, stats: SolveStats | None = None):
    """Block-forward time stepping; returns the ``(n_steps + 1, n_free)`` trajectory."""
    solver = SolverConfig() if solver is None else solver
    disc = ps.discretize() if disc is None else disc
    stepper = ThetaStepper.build(disc, ps.kappa, ps.dt, ps.theta, solver)
    loads = step_loads(ps, disc)
    u = np.zeros((ps.n_steps + 1, disc.n_free))
    u[0] = project_initial(ps, disc)
    for k in range(ps.n_steps):
        u[k + 1], its = stepper.step(u[k], loads[k], x0=u[k], where=(0, k + 1))
        if stats is not None:
            stats.add(1, its)
    return u


def manufactured_problem(kappa=1.0, **kw) -> ProblemSpec:
    """``u = sin(pi x) sin(pi y) exp(-t)`` on the unit square."""
    def source(x, y, t):
        return (2.0 * np.pi**2 * kappa - 1.0) * np.sin(np.pi * x) * np.sin(np.pi * y) * np.exp(-t)

    def initial(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    return ProblemSpec(kappa=kappa, source=source, initial=initial, steady_source=False,
                       geometry="unit_square", **kw)


def manufactured_exact(x, y, t):
    return np.sin(np.pi * x) * np.sin(np.pi * y) * np.exp(-t)


__all__ = ["ProblemSpec", "SolverConfig", "ThetaStepper", "theta_step", "sequential_integrate",
           "step_loads", "project_initial", "SpatialSolverError", "SolveStats",
           "manufactured_problem", "manufactured_exact"]

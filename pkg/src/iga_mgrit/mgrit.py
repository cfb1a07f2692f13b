"""Multigrid reduction in time for the theta-scheme heat equation.

Level ``l`` has ``N_l = N_t / m^l`` steps of size ``dt m^l``; every ``m``-th
point is a C-point. The level equations are

    u^0 = g^0,      u^k - Phi_l u^{k-1} = g^k   (k >= 1)

with ``Phi_l = A_plus^{-1} A_minus``. Right-hand sides are stored so that one
step is a single spatial solve: ``b[0] = g^0`` and ``b[k] = A_plus g^k`` for
``k >= 1`` (on the finest level ``b[k]`` is simply the step load). Coarse
levels are rediscretizations with the larger step; restriction is injection
of the residual at C-points and interpolation is injection followed by
F-relaxation.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .multigrid import SpatialDiscretization
from .parallel import WorkerPool
from .time_integration import (ProblemSpec, SolverConfig, SolveStats, ThetaStepper,
                               project_initial, step_loads)

log = logging.getLogger(__name__)

CYCLES = ("V", "F", "two_level")
RELAXATIONS = ("F", "FCF")


class HierarchyError(ValueError):
    """Number of time steps incompatible with the coarsening factor."""


@dataclass
class MgritConfig:
    cycle: str = "V"
    relaxation: str = "FCF"
    m: int = 2
    tol: float = 1e-10
    max_iter: int = 100
    coarse_floor: int = 8      # stop coarsening once a level has at most this many steps
    workers: int = 1

    def __post_init__(self):
        self.cycle = {"v": "V", "f": "F", "two-level": "two_level"}.get(self.cycle.lower(), self.cycle)
        self.relaxation = self.relaxation.upper()
        if self.cycle not in CYCLES:
            raise ValueError(f"unknown cycle {self.cycle!r}")
        if self.relaxation not in RELAXATIONS:
            raise ValueError(f"unknown relaxation {self.relaxation!r}")
        if self.m < 2:
            raise ValueError("coarsening factor must be at least 2")
        if self.coarse_floor < 1 or self.workers < 1 or self.max_iter < 1:
            raise ValueError("coarse_floor, workers and max_iter must be positive")


def level_sizes(n_steps: int, cfg: MgritConfig) -> list[int]:
    """Number of steps on every level, finest first."""
    sizes = [n_steps]
    if cfg.cycle == "two_level":
        if n_steps % cfg.m:
            raise HierarchyError(f"N_t={n_steps} not divisible by m={cfg.m}")
        return [n_steps, n_steps // cfg.m] if n_steps > 1 else sizes
    while sizes[-1] > cfg.coarse_floor:
        if sizes[-1] % cfg.m:
            raise HierarchyError(
                f"level with {sizes[-1]} steps cannot be coarsened by m={cfg.m} "
                f"(N_t={n_steps} must be divisible by m^{len(sizes)})")
        sizes.append(sizes[-1] // cfg.m)
    return sizes


@dataclass
class TimeLevel:
    index: int
    n_steps: int
    dt: float
    stepper: ThetaStepper
    u: np.ndarray
    b: np.ndarray


@dataclass
class TimeGridHierarchy:
    levels: list
    m: int
    pool: WorkerPool
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def _run(self, fn, items):
        for solves, its in self.pool.map_chunks(fn, items):
            self.stats.add(solves, its)


def build_hierarchy(ps: ProblemSpec, cfg: MgritConfig, disc: SpatialDiscretization,
                    solver: SolverConfig, pool: WorkerPool | None = None) -> TimeGridHierarchy:
    sizes = level_sizes(ps.n_steps, cfg)
    levels = []
    n = disc.n_free
    for l, n_l in enumerate(sizes):
        dt_l = ps.dt * cfg.m ** l
        stepper = ThetaStepper.build(disc, ps.kappa, dt_l, ps.theta, solver)
        levels.append(TimeLevel(l, n_l, dt_l, stepper, np.zeros((n_l + 1, n)), np.zeros((n_l + 1, n))))
    levels[0].b[0] = project_initial(ps, disc)
    levels[0].b[1:] = step_loads(ps, disc)
    return TimeGridHierarchy(levels, cfg.m, pool or WorkerPool(cfg.workers))


# ---------------------------------------------------------------------------
# relaxation


def _stepper_chunk(lev: TimeLevel, m: int, offsets):
    """Work function stepping ``u[j*m + i] <- Phi u[j*m + i - 1] + g`` for i in offsets."""
    def work(intervals):
        solves = its = 0
        for j in intervals:
            for i in offsets:
                k = j * m + i
                if k > lev.n_steps:
                    break
                lev.u[k], n_it = lev.stepper.step(lev.u[k - 1], lev.b[k], x0=lev.u[k],
                                                  where=(lev.index, k))
                solves += 1
                its += n_it
        return solves, its
    return work


def f_relax(h: TimeGridHierarchy, l: int):
    """Propagate from every C-point across the following F-points."""
    lev = h.levels[l]
    n_int = -(-lev.n_steps // h.m)
    h._run(_stepper_chunk(lev, h.m, range(1, h.m)), range(n_int))


def c_relax(h: TimeGridHierarchy, l: int):
    """Update every C-point (except t_0) from its preceding F-point."""
    lev = h.levels[l]
    h._run(_stepper_chunk(lev, h.m, (0,)), range(1, lev.n_steps // h.m + 1))


def fcf_relax(h: TimeGridHierarchy, l: int):
    f_relax(h, l)
    c_relax(h, l)
    f_relax(h, l)


def sequential_solve(h: TimeGridHierarchy, l: int):
    """Exact block-forward solve of the level equations."""
    lev = h.levels[l]
    lev.u[0] = lev.b[0]
    solves = its = 0
    for k in range(1, lev.n_steps + 1):
        lev.u[k], n_it = lev.stepper.step(lev.u[k - 1], lev.b[k], x0=lev.u[k], where=(l, k))
        solves += 1
        its += n_it
    h.stats.add(solves, its)


def level_residual(h: TimeGridHierarchy, l: int, points) -> np.ndarray:
    """Propagated-form residual ``g^k - u^k + Phi u^{k-1}`` at the given points.

    Rows of points not requested are left at zero.
    """
    lev = h.levels[l]
    r = np.zeros_like(lev.u)
    pts = [k for k in points if k >= 1]
    if 0 in points:
        r[0] = lev.b[0] - lev.u[0]

    def work(chunk):
        its = 0
        for k in chunk:
            x, n_it = lev.stepper.step(lev.u[k - 1], lev.b[k], x0=lev.u[k], where=(l, k))
            r[k] = x - lev.u[k]
            its += n_it
        return len(chunk), its

    h._run(work, pts)
    return r


def restrict_residual(h: TimeGridHierarchy, l: int):
    """Inject the C-point residual of level ``l`` as right-hand side of level ``l + 1``."""
    fine, coarse = h.levels[l], h.levels[l + 1]
    cpts = range(0, fine.n_steps + 1, h.m)
    r = level_residual(h, l, cpts)
    rc = r[::h.m]
    coarse.b[0] = rc[0]
    # b = A_plus g on the coarse level
    for j in range(1, coarse.n_steps + 1):
        coarse.b[j] = coarse.stepper.a_plus @ rc[j]
    coarse.u[:] = 0.0


def interpolate_and_correct(h: TimeGridHierarchy, l: int):
    """Add the coarse error at C-points, then F-relax (ideal interpolation)."""
    fine, coarse = h.levels[l], h.levels[l + 1]
    fine.u[::h.m] += coarse.u
    f_relax(h, l)


def mgrit_cycle(h: TimeGridHierarchy, l: int, cfg: MgritConfig, kind: str | None = None):
    kind = kind or ("F" if cfg.cycle == "F" else "V")
    if l == h.n_levels - 1:
        sequential_solve(h, l)
        return
    if cfg.relaxation == "FCF":
        fcf_relax(h, l)
    else:
        f_relax(h, l)
    restrict_residual(h, l)
    if kind == "F":
        mgrit_cycle(h, l + 1, cfg, "F")
        if l + 1 < h.n_levels - 1:
            mgrit_cycle(h, l + 1, cfg, "V")
    else:
        mgrit_cycle(h, l + 1, cfg, "V")
    interpolate_and_correct(h, l)


def rhs_norm(h: TimeGridHierarchy) -> float:
    """``||g||_2`` of the finest level in propagated form."""
    lev = h.levels[0]
    total = float(lev.b[0] @ lev.b[0])
    loads = lev.b[1:]
    if loads.shape[0] == 0:
        return np.sqrt(total)
    if np.all(loads == loads[0]):
        g, _ = lev.stepper.solve(loads[0])
        return np.sqrt(total + loads.shape[0] * float(g @ g))
    for row in loads:
        g, _ = lev.stepper.solve(row)
        total += float(g @ g)
    return np.sqrt(total)


def space_time_residual(h: TimeGridHierarchy) -> float:
    r = level_residual(h, 0, range(h.levels[0].n_steps + 1))
    return float(np.sqrt(np.sum(r * r)))


@dataclass
class MgritResult:
    u: np.ndarray
    iterations: int
    residual_history: list
    converged: bool
    stats: SolveStats
    wall_seconds: float
    n_levels: int

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0


class MgritSolver:
    """Set up once (assembly, hierarchies, factorizations), then :meth:`solve`."""

    def __init__(self, ps: ProblemSpec, cfg: MgritConfig | None = None,
                 solver: SolverConfig | None = None, disc: SpatialDiscretization | None = None):
        self.ps = ps
        self.cfg = cfg or MgritConfig()
        self.solver_cfg = solver or SolverConfig()
        self.disc = disc or ps.discretize()
        self.hierarchy = build_hierarchy(ps, self.cfg, self.disc, self.solver_cfg,
                                         WorkerPool(self.cfg.workers))

    def solve(self) -> MgritResult:
        h, cfg = self.hierarchy, self.cfg
        lev = h.levels[0]
        lev.u[:] = 0.0
        lev.u[0] = lev.b[0]
        h.stats = SolveStats()
        t0 = time.perf_counter()
        gnorm = rhs_norm(h)
        history = []
        converged = False
        it = 0
        for it in range(1, cfg.max_iter + 1):
            mgrit_cycle(h, 0, cfg)
            res = space_time_residual(h)
            rel = res / gnorm if gnorm > 0 else res
            history.append(rel)
            log.debug("MGRIT iteration %d: relative residual %.3e", it, rel)
            if rel <= cfg.tol:
                converged = True
                break
        wall = time.perf_counter() - t0
        return MgritResult(lev.u.copy(), it, history, converged, h.stats, wall, h.n_levels)

    def close(self):
        self.hierarchy.pool.close()


def mgrit_solve(ps: ProblemSpec, cfg: MgritConfig | None = None, solver: SolverConfig | None = None,
                disc: SpatialDiscretization | None = None) -> MgritResult:
    s = MgritSolver(ps, cfg, solver, disc)
    try:
        return s.solve()
    finally:
        s.close()

"""p-multigrid with ILUT smoothing and an h-multigrid W-cycle at p = 1.

One cycle does ``nu1`` ILUT smoothing steps at order p, restricts the residual
straight to p = 1 through lumped-mass L2 transfers, approximates the p = 1
correction with a single W-cycle (Gauss-Seidel, dense LU on the coarsest
mesh), prolongates it back and finishes with ``nu2`` smoothing steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .assembly import (DofMap, assemble_mass_stiffness, assemble_mixed_transfer,
                       eliminate_dirichlet, lump_mass)
from .geometry import GeometryMap
from .linalg import DenseLU, as_csr, csr_arrays, ilut_factor, IlutFactors
from .spline_basis import uniform_tensor_basis, TensorBasis2D

COARSEST_ELEMENTS = 4


def h_level_elements(n_elements: int) -> list[int]:
    """Element counts per direction of the h-hierarchy, finest first.

    Coarsening halves the mesh while the count is at least 8 and even.
    """
    counts = [n_elements]
    while counts[-1] >= 2 * COARSEST_ELEMENTS and counts[-1] % 2 == 0:
        counts.append(counts[-1] // 2)
    return counts


def canonical_prolongation_1d(n_coarse: int) -> sp.csr_matrix:
    """Embedding of linear splines on ``n_coarse`` spans into the bisected mesh."""
    nf = 2 * n_coarse + 1
    rows, cols, vals = [], [], []
    for i in range(n_coarse + 1):
        rows.append(2 * i)
        cols.append(i)
        vals.append(1.0)
    for i in range(n_coarse):
        rows += [2 * i + 1, 2 * i + 1]
        cols += [i, i + 1]
        vals += [0.5, 0.5]
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(nf, n_coarse + 1)))


def canonical_prolongation_2d(n_coarse: int) -> sp.csr_matrix:
    p1 = canonical_prolongation_1d(n_coarse)
    return as_csr(sp.kron(p1, p1))


def _pack(mats):
    """Concatenate CSR matrices into shared arrays with per-matrix pointer offsets."""
    if not mats:
        z = np.zeros(0, np.int64)
        return z, z.copy(), np.zeros(0), np.zeros(0, np.int64)
    ptrs, idxs, vals, starts = [], [], [], []
    nnz_off = 0
    ptr_off = 0
    for m in mats:
        p, i, v = csr_arrays(as_csr(m))
        starts.append(ptr_off)
        ptrs.append(p + nnz_off)
        idxs.append(i)
        vals.append(v)
        nnz_off += v.size
        ptr_off += p.size
    return (np.concatenate(ptrs), np.concatenate(idxs), np.concatenate(vals),
            np.asarray(starts, dtype=np.int64))


def wcycle_schedule(n_levels: int, level: int = 0) -> list[tuple[int, int]]:
    if level == n_levels - 1:
        return [(K.OP_COARSE, level)]
    inner = wcycle_schedule(n_levels, level + 1)
    return ([(K.OP_PRE, level), (K.OP_RESTRICT, level)] + inner + inner
            + [(K.OP_PROLONG, level), (K.OP_POST, level)])


class HMultigrid:
    """Geometric W-cycle over a list of matrices, finest first.

    ``prolongations[l]`` maps level ``l + 1`` to level ``l``; restriction is
    its transpose times ``restriction_scale``.
    """

    def __init__(self, matrices, prolongations, gs_pre=2, gs_post=2, restriction_scale=1.0):
        if len(prolongations) != len(matrices) - 1:
            raise ValueError("need one prolongation per coarsening step")
        self.matrices = [as_csr(a) for a in matrices]
        self.prolongations = [as_csr(p) for p in prolongations]
        self.restrictions = [as_csr(restriction_scale * p.T) for p in self.prolongations]
        self.gs_pre = gs_pre
        self.gs_post = gs_post
        self.coarse = DenseLU.factor(self.matrices[-1])
        sizes = np.array([a.shape[0] for a in self.matrices], dtype=np.int64)
        h_ptr, h_idx, h_val, h_start = _pack(self.matrices)
        p_ptr, p_idx, p_val, p_start = _pack(self.prolongations)
        r_ptr, r_idx, r_val, r_start = _pack(self.restrictions)
        vec_off = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        sched = np.array(wcycle_schedule(len(self.matrices)), dtype=np.int64)
        self.args = (h_ptr, h_idx, h_val, h_start, sizes,
                     p_ptr, p_idx, p_val, p_start,
                     r_ptr, r_idx, r_val, r_start,
                     vec_off, self.coarse.lu, self.coarse.piv, sched)

    @property
    def n_levels(self) -> int:
        return len(self.matrices)

    def cycle(self, b, x=None) -> np.ndarray:
        """One W-cycle for ``A_0 x = b``; returns the updated iterate."""
        n = self.matrices[0].shape[0]
        vec_off = self.args[13]
        xs = np.zeros(vec_off[-1])
        bs = np.zeros(vec_off[-1])
        rs = np.zeros(vec_off[-1])
        if x is not None:
            xs[:n] = x
        bs[:n] = b
        K.hmg_cycle(*self.args, self.gs_pre, self.gs_post, xs, bs, rs)
        return xs[:n].copy()


@dataclass
class TransferOps:
    """Lumped L2 transfers between the order-p and the p = 1 space (free dofs)."""

    mixed: sp.csr_matrix | None      # int Phi_{i,p} Phi_{j,1}; None means identity
    lumped_high: np.ndarray | None
    lumped_low: np.ndarray | None
    _prolong: sp.csr_matrix = field(init=False, repr=False)
    _restrict: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        if self.mixed is None:
            raise ValueError("use TransferOps.identity for equal spaces")
        self._prolong = as_csr(sp.diags(1.0 / self.lumped_high) @ self.mixed)
        self._restrict = as_csr(sp.diags(1.0 / self.lumped_low) @ self.mixed.T)

    @classmethod
    def identity(cls, n: int) -> "TransferOps":
        obj = cls.__new__(cls)
        obj.mixed = None
        obj.lumped_high = obj.lumped_low = None
        obj._prolong = obj._restrict = as_csr(sp.identity(n))
        return obj

    def prolong(self, v1):
        return self._prolong @ v1

    def restrict(self, vp):
        return self._restrict @ vp


@dataclass
class SpatialDiscretization:
    """Matrices shared by every time level: order p plus the p = 1 h-family."""

    basis: TensorBasis2D
    geometry: GeometryMap
    dofmap: DofMap
    mass: sp.csr_matrix          # free dofs
    stiffness: sp.csr_matrix     # free dofs
    low_mass: list               # p = 1 mass per h-level, finest first (free dofs)
    low_stiffness: list
    h_prolongations: list        # free-dof canonical prolongations
    transfer: TransferOps
    mass_full: sp.csr_matrix = field(repr=False, default=None)

    @property
    def degree(self) -> int:
        return self.basis.degree

    @property
    def n_free(self) -> int:
        return self.dofmap.n_free

    @classmethod
    def build(cls, p: int, n_elements: int, geometry: GeometryMap) -> "SpatialDiscretization":
        basis = uniform_tensor_basis(p, n_elements)
        dm = DofMap.dirichlet(basis)
        m_full, k_full = assemble_mass_stiffness(basis, geometry)
        mass = eliminate_dirichlet(m_full, dm)
        stiff = eliminate_dirichlet(k_full, dm)

        low_m, low_k, prolongs, low_dms = [], [], [], []
        for ne in h_level_elements(n_elements):
            b1 = basis if (p == 1 and ne == n_elements) else uniform_tensor_basis(1, ne)
            dm1 = DofMap.dirichlet(b1)
            if p == 1 and ne == n_elements:
                m1, k1 = mass, stiff
            else:
                m1f, k1f = assemble_mass_stiffness(b1, geometry)
                m1, k1 = eliminate_dirichlet(m1f, dm1), eliminate_dirichlet(k1f, dm1)
            low_m.append(m1)
            low_k.append(k1)
            low_dms.append(dm1)
        for l in range(len(low_dms) - 1):
            nc = h_level_elements(n_elements)[l + 1]
            pf = canonical_prolongation_2d(nc)
            prolongs.append(as_csr(pf[low_dms[l].global_of_free][:, low_dms[l + 1].global_of_free]))

        if p == 1:
            transfer = TransferOps.identity(dm.n_free)
        else:
            b1 = uniform_tensor_basis(1, n_elements)
            dm1 = low_dms[0]
            mixed_full = assemble_mixed_transfer(basis, b1, geometry)
            m1_full, _ = assemble_mass_stiffness(b1, geometry)
            transfer = TransferOps(
                eliminate_dirichlet(mixed_full, dm, dm1),
                lump_mass(m_full)[dm.global_of_free],
                lump_mass(m1_full)[dm1.global_of_free],
            )
        return cls(basis, geometry, dm, mass, stiff, low_m, low_k, prolongs, transfer, m_full)

    def operator(self, coef: float) -> sp.csr_matrix:
        """``M + coef * K`` on the free dofs."""
        return as_csr(self.mass + coef * self.stiffness)


class PMultigrid:
    """p-multigrid solver for ``(M + coef K) x = b`` on the free dofs."""

    def __init__(self, disc: SpatialDiscretization, coef: float, nu1=1, nu2=1,
                 gs_pre=2, gs_post=2, ilut_tau=1e-13, ilut_fill=None,
                 rel_tol=1e-12, max_iter=100, fixed_cycles=None):
        self.disc = disc
        self.coef = coef
        self.matrix = disc.operator(coef)
        self.smoother: IlutFactors = ilut_factor(self.matrix, ilut_tau, ilut_fill)
        self.transfer = disc.transfer
        low = [as_csr(m + coef * k) for m, k in zip(disc.low_mass, disc.low_stiffness)]
        self.hmg = HMultigrid(low, disc.h_prolongations, gs_pre, gs_post)
        self.nu1, self.nu2 = nu1, nu2
        self.rel_tol = rel_tol
        self.max_iter = max_iter
        self.fixed_cycles = fixed_cycles
        self._args = (*csr_arrays(self.matrix), *self.smoother.arrays(),
                      *csr_arrays(self.transfer._prolong), *csr_arrays(self.transfer._restrict),
                      *self.hmg.args, nu1, nu2, gs_pre, gs_post)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def vcycle(self, b, x) -> np.ndarray:
        """Exactly one p-multigrid cycle applied to ``x`` (in place)."""
        K.pmg_kernel(*self._args, np.ascontiguousarray(b, dtype=float), x, 0.0, 1, True)
        return x

    def solve(self, b, x0=None, rel_tol=None, max_iter=None):
        """Cycle until the relative residual drops below ``rel_tol``.

        Returns ``(x, cycles, converged)``; with ``fixed_cycles`` set the
        solver always performs that many cycles.
        """
        b = np.ascontiguousarray(b, dtype=float)
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        tol = self.rel_tol if rel_tol is None else rel_tol
        if self.fixed_cycles is not None:
            its, conv, _ = K.pmg_kernel(*self._args, b, x, tol, self.fixed_cycles, True)
            return x, its, True
        maxit = self.max_iter if max_iter is None else max_iter
        its, conv, _ = K.pmg_kernel(*self._args, b, x, tol, maxit, False)
        return x, its, conv


def build_pmg(disc: SpatialDiscretization, coef: float, **kwargs) -> PMultigrid:
    return PMultigrid(disc, coef, **kwargs)


def pmg_vcycle(h: PMultigrid, b, x) -> np.ndarray:
    return h.vcycle(b, x)


def hmg_wcycle(h: HMultigrid, b, x=None) -> np.ndarray:
    return h.cycle(b, x)


def pmg_solve(h: PMultigrid, b, x0=None, rel_tol=None, max_iter=None):
    x, its, _ = h.solve(b, x0, rel_tol, max_iter)
    return x, its

"""Sparse linear algebra: CSR products, CG, Gauss-Seidel, ILUT and a dense coarse solver.

Sparse matrices are ``scipy.sparse.csr_matrix`` with sorted column indices;
the numerical work happens in the compiled kernels of :mod:`._kernels`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels as K


class SingularPivotError(ValueError):
    """Zero (or dropped) pivot during a factorization."""


class CGBreakdown(ArithmeticError):
    """Non-positive curvature encountered; the matrix is not SPD."""


def as_csr(a) -> sp.csr_matrix:
    a = sp.csr_matrix(a, dtype=float)
    a.sum_duplicates()
    a.sort_indices()
    return a


def csr_arrays(a: sp.csr_matrix):
    """``(indptr, indices, data)`` with the dtypes the kernels are compiled for."""
    return (np.ascontiguousarray(a.indptr, dtype=np.int64),
            np.ascontiguousarray(a.indices, dtype=np.int64),
            np.ascontiguousarray(a.data, dtype=np.float64))


def spmv(a: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    """Deterministic row-ordered product ``A x``."""
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} times {x.shape}")
    y = np.empty(a.shape[0])
    K.csr_matvec(*csr_arrays(as_csr(a)), np.ascontiguousarray(x, dtype=float), y)
    return y


def cg_solve(a, b, x0=None, rel_tol=1e-8, max_iter=1000, precond="diag"):
    """(Diagonally preconditioned) conjugate gradients.

    Parameters
    ----------
    precond : {"diag", None} or ndarray
        ``"diag"`` uses the inverse diagonal of ``a``; an array is taken as
        the inverse preconditioner diagonal.

    Returns
    -------
    x, iterations, residual_history
        ``residual_history[k]`` is ``||b - A x_k||_2``.
    """
    a = as_csr(a)
    b = np.ascontiguousarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if precond is None:
        dinv = np.ones_like(b)
    elif isinstance(precond, str):
        if precond != "diag":
            raise ValueError(f"unknown preconditioner {precond!r}")
        dinv = 1.0 / a.diagonal()
    else:
        dinv = np.asarray(precond, dtype=float)
    hist = np.zeros(max_iter + 1)
    its, _ = K.cg_kernel(*csr_arrays(a), dinv, b, x, rel_tol, max_iter, hist)
    if its < 0:
        raise CGBreakdown(f"non-positive curvature at iteration {-its}")
    return x, its, hist[:its + 1].copy()


def gauss_seidel_sweep(a, b, x, direction="forward"):
    """One in-place lexicographic Gauss-Seidel sweep."""
    a = as_csr(a)
    if np.any(a.diagonal() == 0.0):
        raise ValueError("zero diagonal entry")
    if direction == "forward":
        K.gs_forward(*csr_arrays(a), np.asarray(b, dtype=float), x)
    elif direction == "backward":
        K.gs_backward(*csr_arrays(a), np.asarray(b, dtype=float), x)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return x


@dataclass(frozen=True)
class IlutFactors:
    """Incomplete factors ``A ~ L U``; ``L`` has an implicit unit diagonal."""

    lower: tuple          # CSR triplet of the strict lower part of L
    upper: tuple          # CSR triplet of the strict upper part of U
    diag: np.ndarray      # diagonal of U
    drop_tolerance: float
    fill_limit: int
    _scratch: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.diag.size

    @property
    def L(self) -> sp.csr_matrix:
        low = sp.csr_matrix((self.lower[2], self.lower[1], self.lower[0]), shape=(self.n, self.n))
        return as_csr(low + sp.identity(self.n))

    @property
    def U(self) -> sp.csr_matrix:
        up = sp.csr_matrix((self.upper[2], self.upper[1], self.upper[0]), shape=(self.n, self.n))
        return as_csr(up + sp.diags(self.diag))

    def arrays(self):
        return (*self.lower, *self.upper, self.diag)


def default_fill(a: sp.csr_matrix) -> int:
    return max(1, math.ceil(a.nnz / a.shape[0]))


def ilut_factor(a, tau: float = 1e-13, fill_limit: int | None = None) -> IlutFactors:
    """Dual-threshold incomplete LU without pivoting.

    Entries below ``tau`` times the 2-norm of the current row of ``a`` are
    dropped, then at most ``fill_limit`` entries are kept in each row of L
    and of U (the U diagonal counts towards its budget).
    """
    a = as_csr(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError("ILUT needs a square matrix")
    if fill_limit is None:
        fill_limit = default_fill(a)
    status, *facs = K.ilut_kernel(*csr_arrays(a), float(tau), int(fill_limit))
    if status >= 0:
        raise SingularPivotError(f"zero pivot in row {status}")
    lp, li, lv, up, ui, uv, ud = facs
    return IlutFactors((lp, li, lv), (up, ui, uv), ud, float(tau), int(fill_limit))


def ilut_apply(f: IlutFactors, r) -> np.ndarray:
    """Solve ``L U z = r``."""
    r = np.ascontiguousarray(r, dtype=float)
    z = np.empty_like(r)
    K.ilut_solve(*f.arrays(), r, z)
    return z


@dataclass(frozen=True)
class DenseLU:
    """Partially pivoted dense LU of a (small) coarse matrix."""

    lu: np.ndarray
    piv: np.ndarray

    @classmethod
    def factor(cls, a) -> "DenseLU":
        dense = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise ValueError("direct solver needs a square matrix")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(dense, check_finite=True)
        if np.any(np.diag(lu) == 0.0):
            raise SingularPivotError("singular matrix")
        return cls(np.ascontiguousarray(lu), piv.astype(np.int64))

    def solve(self, b) -> np.ndarray:
        b = np.ascontiguousarray(b, dtype=float)
        x = np.empty_like(b)
        K.dense_lu_solve(self.lu, self.piv, b, x)
        return x


def direct_solve(a, b) -> np.ndarray:
    return DenseLU.factor(a).solve(b)

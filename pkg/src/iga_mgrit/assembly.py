"""Galerkin assembly of mass, stiffness, load and transfer matrices.

All element integrals use tensor Gauss-Legendre quadrature on every knot span,
with ``p + 1`` points per direction unless told otherwise. The global dof of
the tensor pair ``(i_u, i_v)`` is ``i_u + n_u * i_v``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import GeometryMap
from .spline_basis import TensorBasis2D, basis_funs, basis_funs_1st_der, KnotVector


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes and weights for every span of one knot vector."""

    points: np.ndarray   # (n_spans, nq)
    weights: np.ndarray  # (n_spans, nq), include the span length
    spans: np.ndarray    # (n_spans,)


def gauss_rule(kv: KnotVector, nq: int) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(nq)
    spans = kv.spans()
    a = kv.knots[spans][:, None]
    b = kv.knots[spans + 1][:, None]
    pts = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    wts = 0.5 * (b - a) * w[None, :]
    return QuadratureRule(pts, wts, spans)


def _univariate_tables(kv: KnotVector, rule: QuadratureRule):
    p = kv.degree
    vals = np.stack([basis_funs(kv.knots, p, s, rule.points[e]) for e, s in enumerate(rule.spans)])
    ders = np.stack([basis_funs_1st_der(kv.knots, p, s, rule.points[e]) for e, s in enumerate(rule.spans)])
    first = rule.spans - p
    return vals, ders, first


@dataclass
class ElementData:
    values: np.ndarray     # (E, Q, D)
    grads: np.ndarray      # (E, Q, D, 2), physical gradients
    wdet: np.ndarray       # (E, Q), quadrature weight times det J
    dofs: np.ndarray       # (E, D), global dof indices
    x: np.ndarray          # (E, Q)
    y: np.ndarray          # (E, Q)


def element_data(basis: TensorBasis2D, g: GeometryMap, nq: int | None = None,
                 with_grads: bool = True) -> ElementData:
    """Tabulate basis values, physical gradients and weights on all elements."""
    if nq is None:
        nq = basis.degree + 1
    ru = gauss_rule(basis.basis_u, nq)
    rv = gauss_rule(basis.basis_v, nq)
    bu, du, fu = _univariate_tables(basis.basis_u, ru)
    bv, dv, fv = _univariate_tables(basis.basis_v, rv)
    nu, nv = bu.shape[0], bv.shape[0]
    pu1, pv1 = bu.shape[2], bv.shape[2]

    # element e = eu + nu * ev, point q = qa + nq * qb, local dof a + pu1 * b
    def tensor(fv_tab, fu_tab):
        t = fv_tab[None, :, None, :, None, :] * fu_tab[:, None, :, None, :, None]
        # axes: eu, ev, qa, qb, a, b -> ev, eu, qb, qa, b, a
        t = t.transpose(1, 0, 3, 2, 5, 4)
        return t.reshape(nu * nv, nq * nq, pu1 * pv1)

    values = tensor(bv, bu)
    xi = np.broadcast_to(ru.points[None, :, None, :], (nv, nu, nq, nq)).reshape(nu * nv, nq * nq)
    eta = np.broadcast_to(rv.points[:, None, :, None], (nv, nu, nq, nq)).reshape(nu * nv, nq * nq)
    w = (rv.weights[:, None, :, None] * ru.weights[None, :, None, :]).reshape(nu * nv, nq * nq)
    jac = g.jacobian(xi, eta)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(det <= 0):
        raise ValueError("geometry map is not orientation preserving")
    x, y = g.map(xi, eta)

    grads = np.empty(0)
    if with_grads:
        gxi = tensor(bv, du)
        geta = tensor(dv, bu)
        # J^{-T} applied to the parametric gradient
        inv00 = jac[..., 1, 1] / det
        inv01 = -jac[..., 0, 1] / det
        inv10 = -jac[..., 1, 0] / det
        inv11 = jac[..., 0, 0] / det
        gx = inv00[..., None] * gxi + inv10[..., None] * geta
        gy = inv01[..., None] * gxi + inv11[..., None] * geta
        grads = np.stack([gx, gy], axis=-1)

    iu = fu[:, None] + np.arange(pu1)[None, :]            # (nu, pu1)
    iv = fv[:, None] + np.arange(pv1)[None, :]            # (nv, pv1)
    dofs = (iu[None, :, None, :] + basis.n_u * iv[:, None, :, None])  # (nv, nu, b, a)
    dofs = dofs.reshape(nu * nv, pu1 * pv1)
    return ElementData(values, grads, w * det, dofs, x, y)


def _scatter(dofs_r, dofs_c, local, shape) -> sp.csr_matrix:
    n_loc_r, n_loc_c = dofs_r.shape[1], dofs_c.shape[1]
    rows = np.broadcast_to(dofs_r[:, :, None], (dofs_r.shape[0], n_loc_r, n_loc_c)).ravel()
    cols = np.broadcast_to(dofs_c[:, None, :], (dofs_c.shape[0], n_loc_r, n_loc_c)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_mass(basis: TensorBasis2D, g: GeometryMap, nq: int | None = None) -> sp.csr_matrix:
    ed = element_data(basis, g, nq, with_grads=False)
    loc = np.einsum("eqa,eqb,eq->eab", ed.values, ed.values, ed.wdet, optimize=True)
    loc = 0.5 * (loc + loc.transpose(0, 2, 1))
    return _scatter(ed.dofs, ed.dofs, loc, (basis.n_dof, basis.n_dof))


def assemble_stiffness(basis: TensorBasis2D, g: GeometryMap, nq: int | None = None) -> sp.csr_matrix:
    ed = element_data(basis, g, nq)
    loc = np.einsum("eqad,eqbd,eq->eab", ed.grads, ed.grads, ed.wdet, optimize=True)
    loc = 0.5 * (loc + loc.transpose(0, 2, 1))
    return _scatter(ed.dofs, ed.dofs, loc, (basis.n_dof, basis.n_dof))


def assemble_mass_stiffness(basis: TensorBasis2D, g: GeometryMap):
    """Mass and stiffness from a single tabulation."""
    ed = element_data(basis, g)
    m = np.einsum("eqa,eqb,eq->eab", ed.values, ed.values, ed.wdet, optimize=True)
    k = np.einsum("eqad,eqbd,eq->eab", ed.grads, ed.grads, ed.wdet, optimize=True)
    shape = (basis.n_dof, basis.n_dof)
    return (_scatter(ed.dofs, ed.dofs, 0.5 * (m + m.transpose(0, 2, 1)), shape),
            _scatter(ed.dofs, ed.dofs, 0.5 * (k + k.transpose(0, 2, 1)), shape))


def assemble_load(basis: TensorBasis2D, g: GeometryMap, f) -> np.ndarray:
    """Load vector ``int Phi_i f dOmega`` for a vectorized ``f(x, y)``."""
    ed = element_data(basis, g, with_grads=False)
    fq = np.broadcast_to(np.asarray(f(ed.x, ed.y), dtype=float), ed.x.shape)
    loc = np.einsum("eqa,eq->ea", ed.values, fq * ed.wdet)
    return np.bincount(ed.dofs.ravel(), weights=loc.ravel(), minlength=basis.n_dof)


class LoadAssembler:
    """Reusable tabulation for assembling many loads on one basis."""

    def __init__(self, basis: TensorBasis2D, g: GeometryMap):
        self.basis = basis
        self._ed = element_data(basis, g, with_grads=False)

    def __call__(self, f) -> np.ndarray:
        ed = self._ed
        fq = np.broadcast_to(np.asarray(f(ed.x, ed.y), dtype=float), ed.x.shape)
        loc = np.einsum("eqa,eq->ea", ed.values, fq * ed.wdet)
        return np.bincount(ed.dofs.ravel(), weights=loc.ravel(), minlength=self.basis.n_dof)


def assemble_mixed_transfer(basis_high: TensorBasis2D, basis_low: TensorBasis2D,
                            g: GeometryMap) -> sp.csr_matrix:
    """Cross mass matrix ``int Phi_{i,high} Phi_{j,low} dOmega``."""
    for a, b in ((basis_high.basis_u, basis_low.basis_u), (basis_high.basis_v, basis_low.basis_v)):
        if not np.array_equal(a.breakpoints(), b.breakpoints()):
            raise ValueError("bases must share the same knot spans")
    nq = max(basis_high.degree, basis_low.degree) + 1
    hi = element_data(basis_high, g, nq, with_grads=False)
    lo = element_data(basis_low, g, nq, with_grads=False)
    loc = np.einsum("eqa,eqb,eq->eab", hi.values, lo.values, hi.wdet, optimize=True)
    return _scatter(hi.dofs, lo.dofs, loc, (basis_high.n_dof, basis_low.n_dof))


def lump_mass(m: sp.spmatrix) -> np.ndarray:
    """Row-sum lumped diagonal of a mass matrix."""
    diag = np.asarray(m.sum(axis=1)).ravel()
    if np.any(diag <= 0.0):
        raise ValueError("non-positive row sum in mass matrix")
    return diag


@dataclass(frozen=True)
class DofMap:
    """Free/constrained split for homogeneous Dirichlet conditions."""

    n_total: int
    global_of_free: np.ndarray
    free_of_global: np.ndarray   # -1 for constrained dofs

    @property
    def n_free(self) -> int:
        return self.global_of_free.size

    @classmethod
    def dirichlet(cls, basis: TensorBasis2D) -> "DofMap":
        nu, nv = basis.n_u, basis.n_v
        iu, iv = np.meshgrid(np.arange(nu), np.arange(nv))
        interior = ((iu > 0) & (iu < nu - 1) & (iv > 0) & (iv < nv - 1)).ravel()
        free = np.flatnonzero(interior)
        inverse = np.full(nu * nv, -1, dtype=np.int64)
        inverse[free] = np.arange(free.size)
        return cls(nu * nv, free, inverse)

    def restrict_vector(self, v: np.ndarray) -> np.ndarray:
        if v.shape[-1] != self.n_total:
            raise ValueError(f"expected length {self.n_total}, got {v.shape[-1]}")
        return v[..., self.global_of_free]

    def extend_vector(self, v: np.ndarray) -> np.ndarray:
        if v.shape[-1] != self.n_free:
            raise ValueError(f"expected length {self.n_free}, got {v.shape[-1]}")
        out = np.zeros(v.shape[:-1] + (self.n_total,))
        out[..., self.global_of_free] = v
        return out


def eliminate_dirichlet(a: sp.spmatrix, dm: DofMap, dm_cols: DofMap | None = None) -> sp.csr_matrix:
    """Submatrix over free rows (and free columns of ``dm_cols``, default ``dm``)."""
    dm_cols = dm if dm_cols is None else dm_cols
    if a.shape != (dm.n_total, dm_cols.n_total):
        raise ValueError(f"matrix shape {a.shape} does not match dof maps")
    sub = sp.csr_matrix(a)[dm.global_of_free][:, dm_cols.global_of_free]
    sub = sp.csr_matrix(sub)
    sub.sort_indices()
    return sub


def collocation_matrix(kv: KnotVector, pts) -> np.ndarray:
    """Dense matrix of all basis values at the given parameters."""
    from .spline_basis import eval_all
    return np.stack([eval_all(kv, float(t)) for t in pts])


def evaluate_field(basis: TensorBasis2D, coeffs: np.ndarray, xi_pts, eta_pts) -> np.ndarray:
    """Spline field values on the tensor grid ``eta_pts x xi_pts``."""
    bu = collocation_matrix(basis.basis_u, xi_pts)
    bv = collocation_matrix(basis.basis_v, eta_pts)
    c = np.asarray(coeffs).reshape(basis.n_v, basis.n_u)
    return bv @ c @ bu.T


def assemble_1d(kv: KnotVector, nq: int | None = None):
    """Mass and stiffness matrices of a univariate spline space on its parameter interval."""
    p = kv.degree
    rule = gauss_rule(kv, nq or p + 1)
    vals, ders, first = _univariate_tables(kv, rule)
    n = kv.n_basis
    m = np.einsum("eqa,eqb,eq->eab", vals, vals, rule.weights)
    k = np.einsum("eqa,eqb,eq->eab", ders, ders, rule.weights)
    dofs = first[:, None] + np.arange(p + 1)[None, :]
    return _scatter(dofs, dofs, m, (n, n)), _scatter(dofs, dofs, k, (n, n))

"""B-spline knot vectors and basis evaluation (Cox-de Boor recursion).

Indices are 0-based throughout: basis function ``i`` of a knot vector with
knots ``t`` is supported on ``[t[i], t[i+p+1])``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DEGREE = 8


@dataclass(frozen=True)
class KnotVector:
    """Non-decreasing knot sequence together with the spline degree."""

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        p = self.degree
        if p < 0 or p > MAX_DEGREE:
            raise ValueError(f"degree must lie in [0, {MAX_DEGREE}], got {p}")
        if knots.ndim != 1 or knots.size < 2 * (p + 1):
            raise ValueError("knot vector too short for the requested degree")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        p = self.degree
        return float(self.knots[p]), float(self.knots[self.n_basis])

    def spans(self) -> np.ndarray:
        """Indices ``s`` of the non-empty knot spans ``[t[s], t[s+1])``."""
        p, n = self.degree, self.n_basis
        s = np.arange(p, n)
        return s[self.knots[s + 1] > self.knots[s]]

    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots[self.degree:self.n_basis + 1])

    def find_span(self, x: float) -> int:
        """Knot span containing ``x``; the right end maps to the last non-empty span."""
        a, b = self.domain
        if not (a <= x <= b):
            raise ValueError(f"parameter {x} outside [{a}, {b}]")
        p, n = self.degree, self.n_basis
        if x == b:
            s = n - 1
            while self.knots[s] == self.knots[s + 1]:
                s -= 1
            return s
        return int(np.searchsorted(self.knots, x, side="right") - 1)


@dataclass(frozen=True)
class TensorBasis2D:
    basis_u: KnotVector
    basis_v: KnotVector

    @property
    def n_u(self) -> int:
        return self.basis_u.n_basis

    @property
    def n_v(self) -> int:
        return self.basis_v.n_basis

    @property
    def n_dof(self) -> int:
        return self.n_u * self.n_v

    @property
    def degree(self) -> int:
        return max(self.basis_u.degree, self.basis_v.degree)


def open_uniform_knots(p: int, n_elements: int, a: float = 0.0, b: float = 1.0) -> KnotVector:
    """Open knot vector on ``[a, b]`` with ``n_elements`` equal spans.

    The end knots are repeated ``p + 1`` times, so the resulting space has
    ``n_elements + p`` basis functions and is interpolatory at both ends.
    """
    if p < 1 or p > MAX_DEGREE:
        raise ValueError(f"degree must lie in [1, {MAX_DEGREE}], got {p}")
    if n_elements < 1:
        raise ValueError(f"need at least one element, got {n_elements}")
    if not a < b:
        raise ValueError(f"empty interval [{a}, {b}]")
    interior = np.linspace(a, b, n_elements + 1)
    knots = np.concatenate([np.full(p, a), interior, np.full(p, b)])
    return KnotVector(knots, p)


def uniform_tensor_basis(p: int, n_elements: int) -> TensorBasis2D:
    kv = open_uniform_knots(p, n_elements, 0.0, 1.0)
    return TensorBasis2D(kv, kv)


def basis_funs(knots, p, span, x):
    """Values of the ``p + 1`` non-vanishing basis functions on ``span``.

    ``x`` may be a scalar or an array whose entries all lie in the span; the
    result has shape ``x.shape + (p + 1,)``.
    """
    x = np.asarray(x, dtype=float)
    vals = np.zeros(x.shape + (p + 1,))
    vals[..., 0] = 1.0
    left = np.zeros(x.shape + (p + 1,))
    right = np.zeros(x.shape + (p + 1,))
    for j in range(1, p + 1):
        left[..., j] = x - knots[span + 1 - j]
        right[..., j] = knots[span + j] - x
        saved = np.zeros(x.shape)
        for r in range(j):
            den = right[..., r + 1] + left[..., j - r]
            # 0/0 terms vanish
            with np.errstate(divide="ignore", invalid="ignore"):
                temp = np.where(den != 0.0, vals[..., r] / den, 0.0)
            vals[..., r] = saved + right[..., r + 1] * temp
            saved = left[..., j - r] * temp
        vals[..., j] = saved
    return vals


def basis_funs_1st_der(knots, p, span, x):
    """First derivatives of the non-vanishing basis functions on ``span``."""
    x = np.asarray(x, dtype=float)
    ders = np.zeros(x.shape + (p + 1,))
    if p == 0:
        return ders
    lower = basis_funs(knots, p - 1, span, x)
    # lower[..., k] is N_{span-p+1+k, p-1}
    for k in range(p + 1):
        i = span - p + k
        if k >= 1:
            den = knots[i + p] - knots[i]
            if den != 0.0:
                ders[..., k] += p / den * lower[..., k - 1]
        if k <= p - 1:
            den = knots[i + p + 1] - knots[i + 1]
            if den != 0.0:
                ders[..., k] -= p / den * lower[..., k]
    return ders


def eval_nonzero(kv: KnotVector, x: float, deriv_order: int = 0):
    """Evaluate the non-zero basis functions (or first derivatives) at ``x``.

    Returns
    -------
    first : int
        Index of the first of the ``p + 1`` consecutive non-zero functions.
    values : ndarray, shape (p + 1,)
    """
    if deriv_order not in (0, 1):
        raise ValueError("deriv_order must be 0 or 1")
    span = kv.find_span(float(x))
    p = kv.degree
    if deriv_order == 0:
        vals = basis_funs(kv.knots, p, span, float(x))
    else:
        vals = basis_funs_1st_der(kv.knots, p, span, float(x))
    return span - p, vals


def eval_all(kv: KnotVector, x: float, deriv_order: int = 0) -> np.ndarray:
    """Dense vector of all ``n_basis`` function values at ``x``."""
    first, vals = eval_nonzero(kv, x, deriv_order)
    out = np.zeros(kv.n_basis)
    out[first:first + kv.degree + 1] = vals
    return out


def eval_tensor(basis: TensorBasis2D, xi: float, eta: float, deriv: str = "value"):
    """Evaluate the non-zero tensor-product functions at ``(xi, eta)``.

    Global index of the pair ``(i_u, i_v)`` is ``i_u + n_u * i_v``. For
    ``deriv="grad"`` the values have shape ``(k, 2)`` holding the parametric
    gradient ``(d/dxi, d/deta)``.
    """
    if deriv not in ("value", "grad"):
        raise ValueError(f"unknown deriv {deriv!r}")
    fu, bu = eval_nonzero(basis.basis_u, xi, 0)
    fv, bv = eval_nonzero(basis.basis_v, eta, 0)
    iu = fu + np.arange(bu.size)
    iv = fv + np.arange(bv.size)
    indices = (iu[None, :] + basis.n_u * iv[:, None]).ravel()
    if deriv == "value":
        return indices, (bv[:, None] * bu[None, :]).ravel()
    _, du = eval_nonzero(basis.basis_u, xi, 1)
    _, dv = eval_nonzero(basis.basis_v, eta, 1)
    gx = (bv[:, None] * du[None, :]).ravel()
    gy = (dv[:, None] * bu[None, :]).ravel()
    return indices, np.stack([gx, gy], axis=1)

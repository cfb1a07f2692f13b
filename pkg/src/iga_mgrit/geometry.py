"""Analytic geometry maps from the parameter square (0, 1)^2 to the physical domain."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GeometryMap:
    """Either the identity on the unit square or a polar quarter annulus.

    The quarter annulus maps ``xi`` to the radius and ``eta`` to the angle
    in ``[0, pi/2]``.
    """

    kind: str = "unit_square"
    r_inner: float = 1.0
    r_outer: float = 2.0

    def __post_init__(self):
        if self.kind not in ("unit_square", "quarter_annulus"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.kind == "quarter_annulus" and not 0.0 < self.r_inner < self.r_outer:
            raise ValueError("quarter annulus needs 0 < r_inner < r_outer")

    @classmethod
    def from_name(cls, name: str) -> "GeometryMap":
        key = name.replace("-", "_")
        if key not in ("unit_square", "quarter_annulus"):
            raise ValueError(f"unknown geometry {name!r}")
        return cls(key)

    @property
    def area(self) -> float:
        if self.kind == "unit_square":
            return 1.0
        return 0.25 * np.pi * (self.r_outer**2 - self.r_inner**2)

    def map(self, xi, eta):
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        if self.kind == "unit_square":
            return xi.copy(), eta.copy()
        r = self.r_inner + xi * (self.r_outer - self.r_inner)
        phi = 0.5 * np.pi * eta
        return r * np.cos(phi), r * np.sin(phi)

    def jacobian(self, xi, eta) -> np.ndarray:
        """Jacobian ``d(x, y)/d(xi, eta)`` with shape ``xi.shape + (2, 2)``."""
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        jac = np.zeros(np.broadcast(xi, eta).shape + (2, 2))
        if self.kind == "unit_square":
            jac[..., 0, 0] = 1.0
            jac[..., 1, 1] = 1.0
            return jac
        dr = self.r_outer - self.r_inner
        r = self.r_inner + xi * dr
        phi = 0.5 * np.pi * eta
        c, s = np.cos(phi), np.sin(phi)
        jac[..., 0, 0] = dr * c
        jac[..., 0, 1] = -0.5 * np.pi * r * s
        jac[..., 1, 0] = dr * s
        jac[..., 1, 1] = 0.5 * np.pi * r * c
        return jac


def map_point(g: GeometryMap, xi: float, eta: float) -> tuple[float, float]:
    x, y = g.map(xi, eta)
    return float(x), float(y)


def jacobian(g: GeometryMap, xi: float, eta: float) -> np.ndarray:
    return g.jacobian(xi, eta)

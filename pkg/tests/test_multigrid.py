import numpy as np
import pytest
import scipy.sparse as sp

from iga_mgrit.assembly import DofMap, assemble_1d, assemble_mass, assemble_mixed_transfer, lump_mass
from iga_mgrit.geometry import GeometryMap
from iga_mgrit.linalg import cg_solve, direct_solve
from iga_mgrit.multigrid import (HMultigrid, PMultigrid, SpatialDiscretization,
                                 canonical_prolongation_1d, canonical_prolongation_2d, h_level_elements,
                                 hmg_wcycle, pmg_solve, pmg_vcycle)
from iga_mgrit.spline_basis import open_uniform_knots, uniform_tensor_basis

SQUARE = GeometryMap()
ANNULUS = GeometryMap("quarter_annulus")
COEF = 0.1 / 256  # kappa * dt * theta of a typical fine time level


@pytest.fixture(scope="module")
def disc3():
    return SpatialDiscretization.build(3, 32, SQUARE)


def test_h_levels():
    assert h_level_elements(32) == [32, 16, 8, 4]
    assert h_level_elements(4) == [4]
    assert h_level_elements(12) == [12, 6]


def test_canonical_prolongation_keeps_constants():
    for nc in (1, 2, 4):
        p1 = canonical_prolongation_1d(nc)
        np.testing.assert_allclose(p1 @ np.ones(nc + 1), np.ones(2 * nc + 1))
        p2 = canonical_prolongation_2d(nc)
        np.testing.assert_allclose(p2 @ np.ones(p2.shape[1]), np.ones(p2.shape[0]))
    # nested spaces: a coarse linear spline equals its prolongation at the fine knots
    np.testing.assert_allclose(canonical_prolongation_1d(2) @ [0.0, 1.0, 4.0], [0, 0.5, 1, 2.5, 4])


@pytest.mark.parametrize("p", [1, 2, 3, 5])
@pytest.mark.parametrize("g", [SQUARE, ANNULUS])
def test_lumped_transfer_preserves_constants(p, g):
    hi, lo = uniform_tensor_basis(p, 4), uniform_tensor_basis(1, 4)
    mixed = assemble_mixed_transfer(hi, lo, g)
    prolong = sp.diags(1 / lump_mass(assemble_mass(hi, g))) @ mixed
    restrict = sp.diags(1 / lump_mass(assemble_mass(lo, g))) @ mixed.T
    np.testing.assert_allclose(prolong @ np.ones(lo.n_dof), 1.0, atol=1e-13)
    np.testing.assert_allclose(restrict @ np.ones(hi.n_dof), 1.0, atol=1e-13)


def test_p1_transfer_is_identity():
    d = SpatialDiscretization.build(1, 8, SQUARE)
    v = np.arange(d.n_free, dtype=float)
    np.testing.assert_array_equal(d.transfer.prolong(v), v)
    np.testing.assert_array_equal(d.transfer.restrict(v), v)
    assert len(d.low_mass) == 2


def test_discretization_shapes(disc3):
    assert disc3.n_free == 33 ** 2
    assert disc3.transfer.prolong(np.ones(31 ** 2)).shape == (disc3.n_free,)
    assert [m.shape[0] for m in disc3.low_mass] == [31 ** 2, 15 ** 2, 7 ** 2, 3 ** 2]


def _hmg_1d(n_el):
    mats, prolongs, dms = [], [], []
    for ne in h_level_elements(n_el):
        _, k = assemble_1d(open_uniform_knots(1, ne))
        mats.append(k[1:-1, 1:-1])
    for ne in h_level_elements(n_el)[1:]:
        prolongs.append(canonical_prolongation_1d(ne)[1:-1, 1:-1])
    return HMultigrid(mats, prolongs)


def test_one_dimensional_poisson_wcycle():
    mg = _hmg_1d(32)
    assert mg.n_levels == 4
    a = mg.matrices[0]
    rng = np.random.default_rng(3)
    b = rng.normal(size=a.shape[0])
    exact = direct_solve(a, b)
    x = np.zeros_like(b)
    errs = [np.linalg.norm(x - exact)]
    for _ in range(5):
        x = hmg_wcycle(mg, b, x)
        errs.append(np.linalg.norm(x - exact))
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert ratios.max() <= 0.2


def test_single_level_hmg_is_direct():
    a = sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    mg = HMultigrid([a], [])
    np.testing.assert_allclose(mg.cycle(np.array([1.0, 2.0])), [1 / 11, 7 / 11], atol=1e-14)


def test_pmg_fixed_point_and_homogeneity(disc3, rng):
    pmg = PMultigrid(disc3, COEF)
    a = pmg.matrix
    x = rng.normal(size=pmg.n)
    b = a @ x
    y = pmg_vcycle(pmg, b, x.copy())
    assert np.abs(y - x).max() <= 1e-12 * np.abs(x).max()
    x0 = rng.normal(size=pmg.n)
    y1 = pmg_vcycle(pmg, b, x0.copy())
    y2 = pmg_vcycle(pmg, 2.5 * b, 2.5 * x0)
    np.testing.assert_allclose(y2, 2.5 * y1, rtol=1e-12, atol=1e-14)


def test_pmg_mass_only_operator(disc3, rng):
    pmg = PMultigrid(disc3, 0.0)
    b = rng.normal(size=pmg.n)
    x, its, conv = pmg.solve(b, rel_tol=1e-10)
    assert conv
    assert np.linalg.norm(b - disc3.mass @ x) <= 1e-10 * np.linalg.norm(b)


def test_pmg_error_contraction(disc3, rng):
    pmg = PMultigrid(disc3, 0.1 * 2.0 ** -10)
    a = pmg.matrix
    b = rng.normal(size=pmg.n)
    exact = direct_solve(a, b)
    x = rng.normal(size=pmg.n)
    errs = [np.linalg.norm(x - exact)]
    for _ in range(5):
        x = pmg_vcycle(pmg, b, x)
        errs.append(np.linalg.norm(x - exact))
    assert (errs[-1] / errs[0]) ** (1 / 5) <= 0.5


def test_pmg_zero_rhs():
    d = SpatialDiscretization.build(2, 8, SQUARE)
    pmg = PMultigrid(d, COEF)
    x, its = pmg_solve(pmg, np.zeros(d.n_free))
    assert its == 0 and not x.any()


@pytest.mark.parametrize("g", [SQUARE, ANNULUS])
def test_pmg_is_p_robust_and_accurate(g):
    rng = np.random.default_rng(11)
    counts, cg_counts = [], []
    for p in (2, 3, 4, 5):
        d = SpatialDiscretization.build(p, 32, g)
        pmg = PMultigrid(d, COEF)
        b = rng.normal(size=d.n_free)
        x, its, conv = pmg.solve(b, rel_tol=1e-8)
        assert conv
        ref = direct_solve(pmg.matrix, b)
        assert np.linalg.norm(x - ref) <= 1e-7 * np.linalg.norm(ref)
        counts.append(its)
        cg_counts.append(cg_solve(pmg.matrix, b, rel_tol=1e-8)[1])
    assert max(counts) - min(counts) <= 2
    assert cg_counts[-1] >= 2 * cg_counts[0]


def test_pmg_residual_monotone(disc3, rng):
    pmg = PMultigrid(disc3, COEF)
    b = rng.normal(size=pmg.n)
    x = np.zeros_like(b)
    res = []
    for _ in range(5):
        x = pmg.vcycle(b, x)
        res.append(np.linalg.norm(b - pmg.matrix @ x))
    assert all(r1 < r0 for r0, r1 in zip(res, res[1:]) if r0 > 1e-13 * np.linalg.norm(b))


def test_pmg_fixed_cycles(disc3, rng):
    pmg = PMultigrid(disc3, COEF, fixed_cycles=3)
    b = rng.normal(size=pmg.n)
    x, its, conv = pmg.solve(b)
    assert its == 3 and conv

import numpy as np
import pytest

from iga_mgrit.geometry import GeometryMap, jacobian, map_point

ANNULUS = GeometryMap("quarter_annulus", 1.0, 2.0)


def test_identity_map():
    assert map_point(GeometryMap(), 0.3, 0.7) == (0.3, 0.7)
    np.testing.assert_array_equal(jacobian(GeometryMap(), 0.4, 0.1), np.eye(2))


def test_annulus_corners():
    np.testing.assert_allclose(map_point(ANNULUS, 0.0, 0.0), (1.0, 0.0), atol=1e-14)
    np.testing.assert_allclose(map_point(ANNULUS, 1.0, 1.0), (0.0, 2.0), atol=1e-14)


def test_annulus_jacobian_at_origin():
    np.testing.assert_allclose(jacobian(ANNULUS, 0.0, 0.0), [[1.0, 0.0], [0.0, np.pi / 2]], atol=1e-15)


@pytest.mark.parametrize("g", [GeometryMap(), ANNULUS, GeometryMap("quarter_annulus", 0.5, 3.0)])
def test_jacobian_matches_finite_difference(g, rng):
    h = 1e-6
    for xi, eta in rng.uniform(h, 1 - h, (50, 2)):
        fd = np.empty((2, 2))
        fd[:, 0] = (np.array(g.map(xi + h, eta)) - np.array(g.map(xi - h, eta))) / (2 * h)
        fd[:, 1] = (np.array(g.map(xi, eta + h)) - np.array(g.map(xi, eta - h))) / (2 * h)
        np.testing.assert_allclose(g.jacobian(xi, eta), fd, atol=1e-5)
        assert np.linalg.det(g.jacobian(xi, eta)) > 0


def test_vectorized_shapes():
    xi = np.linspace(0, 1, 6).reshape(2, 3)
    x, y = ANNULUS.map(xi, xi)
    assert x.shape == (2, 3)
    assert ANNULUS.jacobian(xi, xi).shape == (2, 3, 2, 2)


def test_names_and_errors():
    assert GeometryMap.from_name("quarter-annulus").kind == "quarter_annulus"
    with pytest.raises(ValueError):
        GeometryMap.from_name("disk")
    with pytest.raises(ValueError):
        GeometryMap("quarter_annulus", 2.0, 1.0)
    assert ANNULUS.area == pytest.approx(0.75 * np.pi)

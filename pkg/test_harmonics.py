"""
Tests for Legendre evaluation, the harmonic basis and the moment operator
"""

import math

import numpy as np
import pytest

from harmonics import (
    DiracEnsemble,
    IndexOutOfRangeError,
    MomentVector,
    UnsupportedOrderError,
    coefficient_index,
    harmonics_matrix,
    legendre,
    legendre_derivative_via_lift,
    legendre_series,
    moments,
    num_coefficients,
    projection_kernel,
    read_matrix_binary,
    real_sph_harmonic,
    sampling_matrix,
    write_matrix_binary,
)
from sphere_geometry import SpherePoint, fibonacci_array, points_from_array


def test_coefficient_layout():
    assert num_coefficients(3) == 16
    assert coefficient_index(0, 1) == 0
    assert coefficient_index(2, 1) == 4
    assert coefficient_index(2, 5) == 8


@pytest.mark.parametrize("n,j", [(-1, 1), (2, 0), (2, 6)])
def test_coefficient_index_out_of_range(n, j):
    with pytest.raises(IndexOutOfRangeError):
        coefficient_index(n, j)


def test_legendre_values():
    assert legendre(2, 0.5) == pytest.approx(-0.125)
    assert legendre(0, 0.3) == 1.0
    assert legendre(7, 1.0) == pytest.approx(1.0)
    assert legendre(5, 1.0, order=1) == pytest.approx(15.0)


def test_legendre_derivatives_match_finite_differences():
    h = 1e-6
    for order in (1, 2, 3):
        for n in (3, 8, 15):
            t = 0.3
            fd = (legendre(n, t + h, order - 1) - legendre(n, t - h, order - 1)) / (2 * h)
            assert legendre(n, t, order) == pytest.approx(fd, rel=1e-5, abs=1e-4)


def test_order_above_three_rejected():
    with pytest.raises(UnsupportedOrderError):
        legendre(3, 0.2, order=4)
    with pytest.raises(UnsupportedOrderError):
        legendre_series([1.0, 2.0], 0.1, max_order=4)


def test_derivative_through_lifted_polynomial():
    t = np.linspace(-1, 1, 41)
    for n in range(0, 21):
        assert np.allclose(legendre_derivative_via_lift(n, t), legendre(n, t, 1), atol=1e-9 * max(1, n * n))


def test_constant_harmonic():
    p = SpherePoint.from_lat_lon(12.0, 34.0)
    assert real_sph_harmonic(0, 1, p) == pytest.approx(1 / math.sqrt(4 * math.pi))


def test_addition_formula():
    rng = np.random.default_rng(4)
    zeta = rng.normal(size=(100, 3))
    zeta /= np.linalg.norm(zeta, axis=1, keepdims=True)
    eta = rng.normal(size=(100, 3))
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    Yz, Ye = harmonics_matrix(20, zeta), harmonics_matrix(20, eta)
    t = np.sum(zeta * eta, axis=1)
    for n in range(21):
        rows = slice(n * n, (n + 1) ** 2)
        lhs = np.sum(Yz[rows] * Ye[rows], axis=0)
        assert np.abs(lhs - (2 * n + 1) / (4 * math.pi) * legendre(n, t)).max() < 1e-10


def test_gram_matrix_by_equal_weight_quadrature():
    M = 200000
    grid = fibonacci_array(M)
    Y = harmonics_matrix(10, grid)
    gram = (4 * math.pi / M) * (Y @ Y.T)
    assert np.abs(gram - np.eye(num_coefficients(10))).max() < 1e-3


def test_projection_kernel():
    assert projection_kernel(0, 0.4) == pytest.approx(1 / (4 * math.pi))
    assert projection_kernel(6, 1.0) == pytest.approx(49 / (4 * math.pi))

    zeta = np.array([0.0, 0.0, 1.0])
    eta = np.array([math.sqrt(1 - 0.49), 0.0, 0.7])
    Y = harmonics_matrix(5, np.vstack([zeta, eta]))
    assert projection_kernel(5, 0.7) == pytest.approx(float(Y[:, 0] @ Y[:, 1]), abs=1e-12)


def test_moments_of_empty_ensemble():
    assert np.all(moments(DiracEnsemble(), 4).values == 0.0)


def test_moments_are_linear():
    pts = points_from_array(fibonacci_array(6))
    a = DiracEnsemble([(1.5, pts[0]), (-2.0, pts[3])])
    b = DiracEnsemble([(0.5, pts[0]), (1.0, pts[5])])
    total = moments(a, 6) + moments(b, 6)
    assert np.allclose(moments(a + b, 6).values, total.values, atol=1e-13)


def test_ensemble_rejects_repeated_locations():
    p = SpherePoint(0, 0, 1)
    with pytest.raises(ValueError):
        DiracEnsemble([(1.0, p), (2.0, p)])


def test_sampling_matrix_reproduces_on_grid_moments():
    grid = fibonacci_array(300)
    A = sampling_matrix(grid, 5)
    w = np.zeros(300)
    w[[10, 200]] = [2.0, -1.0]
    f = DiracEnsemble([(2.0, SpherePoint.from_array(grid[10])), (-1.0, SpherePoint.from_array(grid[200]))])
    assert np.allclose(A @ w, moments(f, 5).values, atol=1e-13)


def test_moment_vector_lookup_and_size_check():
    y = MomentVector(2, np.arange(9.0))
    assert y.get(2, 3) == 6.0
    with pytest.raises(IndexOutOfRangeError):
        y.get(1, 4)
    with pytest.raises(ValueError):
        MomentVector(2, np.zeros(8))


def test_moment_vector_json(tmp_path):
    y = MomentVector(1, [0.25, -1.0, 2.0, 0.125])
    path = str(tmp_path / "moments.json")
    y.save(path)
    loaded = MomentVector.load(path)
    assert loaded.degree == 1
    assert np.array_equal(loaded.values, y.values)


def test_matrix_binary_layout(tmp_path):
    A = np.arange(6.0).reshape(2, 3)
    path = str(tmp_path / "A.bin")
    write_matrix_binary(path, A)
    with open(path, "rb") as f:
        raw = f.read()
    assert len(raw) == 8 + 6 * 8
    assert np.array_equal(read_matrix_binary(path), A)

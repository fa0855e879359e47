"""
Tests for the interpolation system, the dual certificate and its validation
"""

import json
import math

import numpy as np
import pytest

from certificate import (
    CertificateReport,
    DegenerateSystemError,
    IllPosedConfigurationError,
    SparsityViolationError,
    assemble_blocks,
    assemble_system,
    eval_certificate,
    evaluate_many,
    heatmap_export,
    nonneg_certificate,
    ring_counts,
    schur_solve,
    solve_certificate,
    validate_certificate,
    validate_nonneg_certificate,
)
from localized_kernel import build_kernel, derivative_at_one
from sphere_geometry import (
    SpherePoint,
    fibonacci_array,
    geodesic_offset,
    min_separation,
    points_from_array,
    rotation_generator,
    tangent_frame,
)


def separated_nodes(rng, count, min_sep):
    """Rejection-sampled nodes with pairwise distance at least min_sep"""
    accepted = []
    while len(accepted) < count:
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        if all(math.acos(min(1.0, float(v @ a))) >= min_sep for a in accepted):
            accepted.append(v)
    return points_from_array(np.array(accepted))


def random_signs(rng, count):
    return rng.choice([-1.0, 1.0], size=count)


@pytest.fixture(scope="module")
def separated_certificate():
    N = 20
    rng = np.random.default_rng(21)
    nodes = separated_nodes(rng, 6, 4.0 / N)
    signs = random_signs(rng, 6)
    table = build_kernel(N)
    cert, diag = solve_certificate(nodes, signs, table)
    return cert, diag, nodes, signs, table


class TestSystem:
    def test_single_node_system_is_diagonal(self):
        table = build_kernel(20)
        F, rhs = assemble_system([SpherePoint(0, 0, 1)], [1.0], table)
        slope = derivative_at_one(table)
        assert np.allclose(F, np.diag([1.0, -slope, -slope]), atol=1e-12 * slope)
        assert np.array_equal(rhs, [1.0, 0.0, 0.0])

    def test_single_node_coefficients(self):
        cert, _ = solve_certificate([SpherePoint(0.3, -0.2, 0.9)], [-1.0], build_kernel(12))
        assert cert.alpha == pytest.approx([-1.0])
        assert cert.beta == pytest.approx([0.0], abs=1e-12)
        assert cert.gamma == pytest.approx([0.0], abs=1e-12)

    def test_block_diagonals(self):
        rng = np.random.default_rng(22)
        table = build_kernel(16)
        nodes = separated_nodes(rng, 5, 0.3)
        blocks = assemble_blocks(nodes, np.ones(5), table)
        slope = derivative_at_one(table)
        tol = 1e-9 * slope
        assert np.allclose(np.diag(blocks.f0), 1.0)
        assert np.allclose(blocks.f0, blocks.f0.T)
        for r in range(2):
            assert np.abs(np.diag(blocks.f1[r])).max() < tol
            assert np.abs(np.diag(blocks.f1_tilde[r])).max() < tol
            assert np.allclose(np.diag(blocks.f2[r, r]), -slope, atol=tol)
        assert np.abs(np.diag(blocks.f2[0, 1])).max() < tol
        assert np.abs(np.diag(blocks.f2[1, 0])).max() < tol

    def test_empty_and_coincident_nodes(self):
        table = build_kernel(10)
        with pytest.raises(DegenerateSystemError):
            assemble_system([], [], table)
        p = SpherePoint(1, 0, 0)
        with pytest.raises(DegenerateSystemError):
            assemble_system([p, SpherePoint(0, 1, 0), p], [1.0, 1.0, -1.0], table)

    def test_signs_must_be_unimodular(self):
        with pytest.raises(ValueError):
            assemble_system([SpherePoint(1, 0, 0)], [0.5], build_kernel(10))

    def test_numerically_singular_system(self):
        base = np.array([0.0, 0.0, 1.0])
        nodes = points_from_array(np.vstack([base, geodesic_offset(base, [1e-7], [0.0]), [1.0, 0.0, 0.0]]))
        with pytest.raises(IllPosedConfigurationError, match="closest nodes 0 and 1"):
            solve_certificate(nodes, [1.0, -1.0, 1.0], build_kernel(20), max_condition=1e6)


class TestSeparatedCertificate:
    def test_interpolates_signs(self, separated_certificate):
        cert, _, nodes, signs, _ = separated_certificate
        values = evaluate_many(cert, cert.nodes_array())
        assert np.abs(values - signs).max() < 1e-8
        grad = evaluate_many(cert, cert.nodes_array(), "gradient")
        assert np.abs(grad).max() < 1e-6 * cert.N ** 2

    def test_system_residual(self, separated_certificate):
        cert, _, nodes, signs, table = separated_certificate
        F, rhs = assemble_system(nodes, signs, table)
        sol = np.concatenate([cert.alpha, cert.beta, cert.gamma])
        assert np.abs(F @ sol - rhs).max() < 1e-9

    def test_block_elimination_matches_dense_solve(self, separated_certificate):
        cert, _, nodes, signs, table = separated_certificate
        alpha, beta, gamma = schur_solve(assemble_blocks(nodes, signs, table), signs)
        assert np.allclose(alpha, cert.alpha, atol=1e-8)
        assert np.allclose(beta, cert.beta, atol=1e-8)
        assert np.allclose(gamma, cert.gamma, atol=1e-8)

    def test_coefficients_stay_near_signs(self, separated_certificate):
        _, diag, _, _, _ = separated_certificate
        assert diag.alpha_max <= 1.5
        assert diag.beta_scaled <= 1.0
        assert diag.gamma_scaled <= 1.0
        assert diag.min_signed_alpha > 0
        assert diag.f0_defect < 1.0

    def test_independent_of_tangent_frames(self, separated_certificate):
        cert, _, nodes, signs, table = separated_certificate
        rng = np.random.default_rng(23)
        frames = [tangent_frame(p).rotated(float(rng.uniform(0, 2 * math.pi))) for p in nodes]
        rotated, _ = solve_certificate(nodes, signs, table, frames=frames)
        pts = rng.normal(size=(100, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        assert np.allclose(evaluate_many(rotated, pts), evaluate_many(cert, pts), atol=1e-9)

    def test_gradient_and_hessian_match_flows(self, separated_certificate):
        cert, _, nodes, _, _ = separated_certificate
        N = cert.N
        xi = geodesic_offset(nodes[0].as_array(), [0.7 / N], [1.1])[0]
        p = SpherePoint.from_array(xi)
        g1, g2 = rotation_generator(p, 1), rotation_generator(p, 2)
        x = p.as_array()

        def q(v):
            return eval_certificate(cert, v)

        h = 1e-6
        grad = eval_certificate(cert, p, "gradient")
        for r, g in enumerate((g1, g2)):
            fd = (q(g.rotation(h) @ x) - q(g.rotation(-h) @ x)) / (2 * h)
            assert grad[r] == pytest.approx(fd, rel=1e-4, abs=1e-6 * N * N)

        h = 1e-4
        hess = eval_certificate(cert, p, "hessian")
        for r, g in enumerate((g1, g2)):
            fd = (q(g.rotation(h) @ x) - 2 * q(x) + q(g.rotation(-h) @ x)) / h ** 2
            assert hess[r, r] == pytest.approx(fd, rel=1e-3, abs=1e-4 * N * N)
        mixed = (q(g2.rotation(h) @ g1.rotation(h) @ x) - q(g2.rotation(h) @ g1.rotation(-h) @ x)
                 - q(g2.rotation(-h) @ g1.rotation(h) @ x) + q(g2.rotation(-h) @ g1.rotation(-h) @ x)) / (4 * h * h)
        assert hess[0, 1] == pytest.approx(mixed, rel=1e-3, abs=1e-4 * N * N)
        assert hess[0, 1] == hess[1, 0]

    def test_validation_passes(self, separated_certificate):
        cert, _, _, _, _ = separated_certificate
        report = validate_certificate(cert)
        assert report.interp_error < 1e-8
        assert report.off_support_max < 1.0
        assert report.hessian_ok
        assert report.passed

    def test_report_serializes(self, separated_certificate):
        cert, _, _, _, _ = separated_certificate
        data = json.loads(validate_certificate(cert, far_grid_size=2000).to_json())
        assert data["passed"] in (True, False)
        assert "alpha_defect" in data["system_diagnostics"]


def test_single_node_validation():
    cert, _ = solve_certificate([SpherePoint(0, 0, 1)], [1.0], build_kernel(20))
    report = validate_certificate(cert)
    assert report.off_support_max < 1.0
    assert report.hessian_ok


def test_clustered_nodes_are_not_certified():
    N = 20
    base = np.array([0.0, 0.0, 1.0])
    pts = geodesic_offset(np.repeat(base[None, :], 3, axis=0), [0.5 / N, 0.5 / N, 0.5 / N], [0.0, 2.1, 4.2])
    nodes = points_from_array(np.vstack([base, pts]))
    try:
        cert, _ = solve_certificate(nodes, [1.0, -1.0, -1.0, -1.0], build_kernel(N))
    except IllPosedConfigurationError:
        return
    assert not validate_certificate(cert).passed


def test_nonfinite_fields_become_strings():
    report = CertificateReport(0.0, 0.0, math.inf, False)
    data = json.loads(report.to_json())
    assert data["off_support_max"] == "inf"
    assert data["passed"] is False


class TestNonnegativeCertificate:
    def test_single_node_and_antipode(self):
        cert = nonneg_certificate([SpherePoint(0, 0, 1)], 5)
        assert cert(SpherePoint(0, 0, 1)) == pytest.approx(1.0)
        assert cert(SpherePoint(0, 0, -1)) == pytest.approx(0.5)

    def test_range_on_clustered_nodes(self):
        base = np.array([0.3, 0.4, 0.866])
        base /= np.linalg.norm(base)
        pts = geodesic_offset(np.repeat(base[None, :], 5, axis=0), np.full(5, 0.01), np.arange(5) * 1.2)
        nodes = points_from_array(np.vstack([base, pts]))
        cert = nonneg_certificate(nodes, 8)
        assert cert.degree == 6
        assert np.allclose(cert(cert.nodes), 1.0)
        report = validate_nonneg_certificate(cert, far_grid_size=100000)
        assert report.hessian_ok
        assert report.interp_error < 1e-12

    def test_too_many_nodes(self):
        with pytest.raises(SparsityViolationError):
            nonneg_certificate(points_from_array(fibonacci_array(6)), 5)


def test_heatmap_hits_the_node(tmp_path):
    node = SpherePoint.from_lat_lon(30.0, 60.0)
    cert, _ = solve_certificate([node, SpherePoint.from_lat_lon(-40.0, -100.0)], [1.0, -1.0], build_kernel(12))
    path = str(tmp_path / "heatmap.csv")
    rows = heatmap_export(cert, 181, 360, path)
    assert len(rows) == 181 * 360
    lookup = {(lat, lon): q for lat, lon, q in rows}
    assert lookup[(30.0, 60.0)] == pytest.approx(1.0, abs=1e-8)
    assert lookup[(-40.0, -100.0)] == pytest.approx(-1.0, abs=1e-8)
    with open(path) as f:
        assert f.readline().strip() == "lat,lon,q"


class TestRings:
    def test_counts_respect_cap_packing(self):
        N, nu = 30, 4.0
        rng = np.random.default_rng(25)
        nodes = separated_nodes(rng, 60, nu / N)
        assert min_separation(nodes) >= nu / N
        counts = ring_counts(nodes, 0, nu, N)
        assert counts.sum() == 59
        width = nu / N
        cap = 1 - math.cos(width / 2)
        for m, count in enumerate(counts):
            inner = max(0.0, width * (m - 0.5))
            outer = min(math.pi, width * (m + 1.5))
            assert count <= (math.cos(inner) - math.cos(outer)) / cap
            assert count <= 20 * (m + 1)

    def test_ring_boundaries(self):
        N, nu = 10, 2.0
        centre = np.array([0.0, 0.0, 1.0])
        pts = geodesic_offset(np.repeat(centre[None, :], 3, axis=0), [0.1, 0.15, 0.5], [0.0, 1.0, 2.0])
        counts = ring_counts(points_from_array(np.vstack([centre, pts])), 0, nu, N)
        assert counts.size == int(math.floor(math.pi * N / nu - 1)) + 1
        assert list(counts[:3]) == [2, 0, 1]

    def test_row_sums_shrink_with_separation(self):
        N = 12
        table = build_kernel(N)
        sums = []
        for nu in (2.0, 3.0, 4.0, 6.0):
            M = int(round(4 * math.pi * N * N / nu ** 2))
            nodes = points_from_array(fibonacci_array(M))
            blocks = assemble_blocks(nodes, np.ones(M), table)
            off = np.abs(blocks.f0 - np.eye(M)).sum(axis=1)
            sums.append(float(off.max()))
        assert all(a > b for a, b in zip(sums, sums[1:]))


def unit_template(rng, count, radius=2.5):
    """Planar offsets with pairwise distance at least 1 inside a disk"""
    accepted = []
    while len(accepted) < count:
        p = rng.uniform(-radius, radius, 2)
        if np.hypot(*p) <= radius and all(np.hypot(*(p - a)) >= 1.0 for a in accepted):
            accepted.append(p)
    return np.array(accepted)


def place_template(template, centre, scale):
    """Map planar offsets onto the sphere around `centre`, distances scaled by `scale`"""
    theta = scale * np.hypot(template[:, 0], template[:, 1])
    psi = np.arctan2(template[:, 1], template[:, 0])
    base = np.repeat(centre[None, :], template.shape[0], axis=0)
    return points_from_array(geodesic_offset(base, theta, psi))


def test_tangent_coefficient_norm_ignores_frames(separated_certificate):
    cert, diag, nodes, signs, table = separated_certificate
    rng = np.random.default_rng(28)
    frames = [tangent_frame(p).rotated(float(rng.uniform(0, 2 * math.pi))) for p in nodes]
    _, rotated = solve_certificate(nodes, signs, table, frames=frames)
    assert rotated.tangent_scaled == pytest.approx(diag.tangent_scaled, rel=1e-8)
    assert diag.tangent_scaled >= max(diag.beta_scaled, diag.gamma_scaled)


@pytest.mark.slow
def test_admissible_configurations_are_certified():
    N = 40
    table = build_kernel(N)
    rng = np.random.default_rng(26)
    passed = 0
    for _ in range(20):
        nodes = separated_nodes(rng, 10, 4.0 / N)
        cert, diag = solve_certificate(nodes, random_signs(rng, 10), table)
        report = validate_certificate(cert)
        assert diag.condition < 1e8
        assert diag.alpha_max <= 1.5
        assert diag.tangent_scaled <= 2.5
        passed += report.passed and report.off_support_max < 1 - 1e-3 and report.interp_error < 1e-8
    assert passed == 20


@pytest.mark.slow
def test_coefficients_approach_signs_as_separation_grows():
    N = 40
    table = build_kernel(N)
    rng = np.random.default_rng(27)
    nus = (3.0, 4.0, 6.0)
    rows = {nu: [] for nu in nus}
    for _ in range(10):
        template = unit_template(rng, 10)
        # equatorial centres keep every node's frame close to east/north at all scales
        phi = rng.uniform(0, 2 * math.pi)
        centre = np.array([math.cos(phi), math.sin(phi), 0.0])
        signs = random_signs(rng, 10)
        for nu in nus:
            nodes = place_template(template, centre, nu / N)
            _, diag = solve_certificate(nodes, signs, table)
            rows[nu].append((diag.alpha_defect, diag.beta_scaled, diag.gamma_scaled, diag.tangent_scaled))
    worst = [np.max(rows[nu], axis=0) for nu in nus]
    for column in range(4):
        assert worst[0][column] >= worst[1][column] >= worst[2][column]

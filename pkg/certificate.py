"""
Dual certificates for Dirac ensembles on the sphere.

A certificate is the band-limited polynomial

    q(xi) = sum_m alpha_m F_N(xi . xi_m) + beta_m psi_m^1(xi) + gamma_m psi_m^2(xi),
    psi_m^r(xi) = D_{xi_m, r} F_N(xi, xi_m),

whose coefficients solve the 3s x 3s interpolation system q(xi_m) = u_m,
D_{xi_m, r} q(xi_m) = 0. The certificate is valid when |q| < 1 away from the
nodes and u_m q has a strict local maximum at every node.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla

from localized_kernel import KernelTable, derivative_at_one, kernel_derivatives, rotational_derivative
from sphere_geometry import (
    SpherePoint,
    TangentFrame,
    closest_pair,
    fibonacci_array,
    frame_axes,
    geodesic_offset,
    pairwise_distances,
    points_to_array,
    tangent_frame,
    tangent_frames,
)

DEFAULT_NU = 4.0
DEFAULT_SIGMA = 0.2
DEFAULT_NEAR_SAMPLES = 32
MAX_CONDITION = 1e12
FAR_GRID_FACTOR = 50
MIN_FAR_GRID = 20000
# bound on (evaluation points) x (nodes) held in memory at once
EVAL_CHUNK = 200000

DerivativeSpec = str  # "none" | "gradient" | "hessian"


class DegenerateSystemError(ValueError):
    """Raised when the interpolation system cannot be formed (empty or repeated nodes)."""


class IllPosedConfigurationError(RuntimeError):
    """Raised when the interpolation system is numerically singular."""


class SparsityViolationError(ValueError):
    """Raised when a non-negative certificate is requested for more than N nodes."""


@dataclass
class SystemDiagnostics:
    """Block norms of the interpolation system and the solved coefficients"""
    f0_defect: float  # ||I - F0||
    f1_norm: float  # max_r ||F1^r||
    f1_tilde_norm: float  # max_r ||F~1^r||
    f2_mixed_norm: float  # max(||F2^{1,2}||, ||F2^{2,1}||)
    f2_diag_defect: float  # max_r ||-F'(1) I - F2^{r,r}||
    condition: float
    schur_f2_defect: float = math.inf  # ||I - F_{s,2} / (-F'(1))||
    schur_f1_norm: float = math.inf
    schur_f1_tilde_norm: float = math.inf
    schur_defect: float = math.inf  # ||I - F_s||
    alpha_max: float = 0.0
    alpha_defect: float = 0.0  # ||alpha - u||
    beta_scaled: float = 0.0  # N ||beta||
    gamma_scaled: float = 0.0  # N ||gamma||
    tangent_scaled: float = 0.0  # N max_m |(beta_m, gamma_m)|, independent of the tangent frames
    min_signed_alpha: float = 0.0  # min_m u_m alpha_m


@dataclass
class SystemBlocks:
    """Blocks of the interpolation system, indexed [r-1] / [r1-1, r2-1]"""
    f0: np.ndarray
    f1: np.ndarray  # (2, s, s)
    f1_tilde: np.ndarray  # (2, s, s)
    f2: np.ndarray  # (2, 2, s, s)
    derivative_at_one: float

    def matrix(self) -> np.ndarray:
        return np.block([
            [self.f0, self.f1_tilde[0], self.f1_tilde[1]],
            [self.f1[0], self.f2[0, 0], self.f2[0, 1]],
            [self.f1[1], self.f2[1, 0], self.f2[1, 1]],
        ])


@dataclass
class Certificate:
    N: int
    nodes: List[SpherePoint]
    signs: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    kernel: KernelTable = field(repr=False)
    frames: List[TangentFrame] = field(default_factory=list, repr=False)
    diagnostics: Optional[SystemDiagnostics] = None

    def __post_init__(self):
        s = len(self.nodes)
        self.signs = np.asarray(self.signs, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if not self.frames:
            self.frames = [tangent_frame(p) for p in self.nodes]
        for name in ("signs", "alpha", "beta", "gamma"):
            if getattr(self, name).shape != (s,):
                raise ValueError(f"{name} must have length {s}, got shape {getattr(self, name).shape}")
        if len(self.frames) != s:
            raise ValueError(f"Expected {s} tangent frames, got {len(self.frames)}")

    def nodes_array(self) -> np.ndarray:
        return points_to_array(self.nodes)

    def node_axes(self) -> np.ndarray:
        """(s, 2, 3) rotation axes of the node generators"""
        return _axes_from_frames(self.frames)


@dataclass
class CertificateReport:
    interp_error: float
    grad_norm: float
    off_support_max: float
    hessian_ok: bool
    system_diagnostics: Optional[SystemDiagnostics] = None
    far_field_max: float = 0.0
    near_field_max: float = 0.0

    @property
    def passed(self) -> bool:
        return self.off_support_max < 1.0 and self.hessian_ok

    def to_dict(self) -> dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), indent=2, sort_keys=True)


def _finite(obj):
    """JSON has no inf/nan; map them to strings"""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _axes_from_frames(frames: Sequence[TangentFrame]) -> np.ndarray:
    base = points_to_array([f.base for f in frames])
    t1 = np.array([f.t1 for f in frames], dtype=float).reshape(-1, 3)
    t2 = np.array([f.t2 for f in frames], dtype=float).reshape(-1, 3)
    a1, a2 = frame_axes(base, t1, t2)
    return np.stack([a1, a2], axis=1)


def _point_axes(points: np.ndarray) -> np.ndarray:
    """(P, 2, 3) generator axes anchored at each evaluation point"""
    t1, t2 = tangent_frames(points)
    a1, a2 = frame_axes(points, t1, t2)
    return np.stack([a1, a2], axis=1)


def _inf_norm(m: np.ndarray) -> float:
    return float(np.abs(m).sum(axis=1).max()) if m.size else 0.0


def _check_nodes(nodes: Sequence[SpherePoint], signs: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    if len(nodes) == 0:
        raise DegenerateSystemError("Interpolation system needs at least one node")
    signs = np.asarray(signs, dtype=float)
    if signs.shape != (len(nodes),):
        raise ValueError(f"Expected {len(nodes)} signs, got {signs.size}")
    if np.any(np.abs(np.abs(signs) - 1.0) > 1e-12):
        raise ValueError("Interpolation values must satisfy |u_m| = 1")
    if len(nodes) >= 2:
        i, j, d = closest_pair(nodes)
        if d <= 1e-12:
            raise DegenerateSystemError(f"Nodes {i} and {j} coincide")
    return points_to_array(nodes), signs


def assemble_blocks(nodes: Sequence[SpherePoint], signs: Sequence[float], table: KernelTable,
                    frames: Optional[Sequence[TangentFrame]] = None) -> SystemBlocks:
    X, _ = _check_nodes(nodes, signs)
    frames = list(frames) if frames else [tangent_frame(p) for p in nodes]
    axes = _axes_from_frames(frames)
    s = X.shape[0]

    xi, xi0 = X[:, None, :], X[None, :, :]
    at_k = axes[:, None, :, :]  # generator anchored at the row node
    at_m = axes[None, :, :, :]  # generator anchored at the column node

    f0 = kernel_derivatives(table, np.clip(X @ X.T, -1.0, 1.0), 0)[0]
    f1 = np.empty((2, s, s))
    f1_tilde = np.empty((2, s, s))
    f2 = np.empty((2, 2, s, s))
    for r in range(2):
        f1[r] = rotational_derivative(table, [at_k[..., r, :]], xi, xi0)
        f1_tilde[r] = rotational_derivative(table, [at_m[..., r, :]], xi, xi0)
    for r1 in range(2):
        for r2 in range(2):
            # D_{xi_k, r1} applied to psi_m^{r2}
            f2[r1, r2] = rotational_derivative(table, [at_m[..., r2, :], at_k[..., r1, :]], xi, xi0)
    return SystemBlocks(f0, f1, f1_tilde, f2, derivative_at_one(table))


def assemble_system(nodes: Sequence[SpherePoint], signs: Sequence[float], table: KernelTable,
                    frames: Optional[Sequence[TangentFrame]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    The 3s x 3s system with rows [q(xi_k); D_{k,1} q(xi_k); D_{k,2} q(xi_k)]
    and unknowns [alpha; beta; gamma], and its right-hand side (u, 0, 0).
    """
    blocks = assemble_blocks(nodes, signs, table, frames)
    s = len(nodes)
    rhs = np.concatenate([np.asarray(signs, dtype=float), np.zeros(2 * s)])
    return blocks.matrix(), rhs


def _schur_parts(blocks: SystemBlocks):
    f22 = sla.lu_factor(blocks.f2[1, 1])
    fs2 = blocks.f2[0, 0] - blocks.f2[0, 1] @ sla.lu_solve(f22, blocks.f2[1, 0])
    fs1 = blocks.f1[0] - blocks.f2[0, 1] @ sla.lu_solve(f22, blocks.f1[1])
    fs1_tilde = blocks.f1_tilde[0] - blocks.f1_tilde[1] @ sla.lu_solve(f22, blocks.f2[1, 0])
    fs2_lu = sla.lu_factor(fs2)
    fs = (blocks.f0
          - fs1_tilde @ sla.lu_solve(fs2_lu, fs1)
          - blocks.f1_tilde[1] @ sla.lu_solve(f22, blocks.f1[1]))
    return f22, fs2, fs2_lu, fs1, fs1_tilde, fs


def schur_solve(blocks: SystemBlocks, signs: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Two-level block elimination: F22 = F2^{2,2}, then
    F_{s,2} = F2^{11} - F2^{12} F22^-1 F2^{21}, F_{s,1} = F1^1 - F2^{12} F22^-1 F1^2,
    and the outer complement F_s. Returns (alpha, beta, gamma).
    """
    u = np.asarray(signs, dtype=float)
    f22, _, fs2_lu, fs1, _, fs = _schur_parts(blocks)
    alpha = sla.solve(fs, u)
    w = sla.lu_solve(fs2_lu, fs1 @ alpha)
    beta = -w
    gamma = sla.lu_solve(f22, blocks.f2[1, 0] @ w - blocks.f1[1] @ alpha)
    return alpha, beta, gamma


def _block_diagnostics(blocks: SystemBlocks, condition: float) -> SystemDiagnostics:
    s = blocks.f0.shape[0]
    eye = np.eye(s)
    fp1 = blocks.derivative_at_one
    diag = SystemDiagnostics(
        f0_defect=_inf_norm(eye - blocks.f0),
        f1_norm=max(_inf_norm(blocks.f1[r]) for r in range(2)),
        f1_tilde_norm=max(_inf_norm(blocks.f1_tilde[r]) for r in range(2)),
        f2_mixed_norm=max(_inf_norm(blocks.f2[0, 1]), _inf_norm(blocks.f2[1, 0])),
        f2_diag_defect=max(_inf_norm(-fp1 * eye - blocks.f2[r, r]) for r in range(2)),
        condition=condition,
    )
    try:
        _, fs2, _, fs1, fs1_tilde, fs = _schur_parts(blocks)
    except (np.linalg.LinAlgError, ValueError):
        return diag
    diag.schur_f2_defect = _inf_norm(eye - fs2 / (-fp1))
    diag.schur_f1_norm = _inf_norm(fs1)
    diag.schur_f1_tilde_norm = _inf_norm(fs1_tilde)
    diag.schur_defect = _inf_norm(eye - fs)
    return diag


def solve_certificate(nodes: Sequence[SpherePoint], signs: Sequence[float], table: KernelTable,
                      frames: Optional[Sequence[TangentFrame]] = None,
                      max_condition: float = MAX_CONDITION,
                      verbose: bool = False) -> Tuple[Certificate, SystemDiagnostics]:
    """
    Solve the interpolation system by LU with partial pivoting.

    Raises:
        IllPosedConfigurationError: condition estimate above `max_condition`
    """
    frames = list(frames) if frames else [tangent_frame(p) for p in nodes]
    blocks = assemble_blocks(nodes, signs, table, frames)
    system = blocks.matrix()
    s = len(nodes)
    u = np.asarray(signs, dtype=float)

    condition = float(np.linalg.cond(system))
    if not math.isfinite(condition) or condition > max_condition:
        if s >= 2:
            i, j, d = closest_pair(nodes)
            where = f"closest nodes {i} and {j} at distance {d:.3e} ({d * table.N:.3f}/N)"
        else:
            where = "single node"
        raise IllPosedConfigurationError(
            f"Interpolation system is numerically singular (condition {condition:.3e} > {max_condition:.0e}); {where}"
        )

    rhs = np.concatenate([u, np.zeros(2 * s)])
    sol = sla.lu_solve(sla.lu_factor(system), rhs)
    alpha, beta, gamma = sol[:s], sol[s:2 * s], sol[2 * s:]

    diag = _block_diagnostics(blocks, condition)
    diag.alpha_max = float(np.abs(alpha).max())
    diag.alpha_defect = float(np.abs(alpha - u).max())
    diag.beta_scaled = table.N * float(np.abs(beta).max())
    diag.gamma_scaled = table.N * float(np.abs(gamma).max())
    diag.tangent_scaled = table.N * float(np.hypot(beta, gamma).max())
    diag.min_signed_alpha = float((u * alpha).min())

    if verbose:
        print(f"🧮 Solved {3 * s}x{3 * s} interpolation system (condition {condition:.2e})")
        print(f"   ||I - F0|| = {diag.f0_defect:.3e}, ||alpha - u|| = {diag.alpha_defect:.3e}, "
              f"N||beta|| = {diag.beta_scaled:.3e}, N||gamma|| = {diag.gamma_scaled:.3e}")

    cert = Certificate(table.N, list(nodes), u, alpha, beta, gamma, table, frames, diag)
    return cert, diag


def _evaluate_chunk(cert: Certificate, X: np.ndarray, derivative: DerivativeSpec) -> np.ndarray:
    table = cert.kernel
    nodes = cert.nodes_array()[None, :, :]
    node_axes = cert.node_axes()[None, :, :, :]
    xi = X[:, None, :]
    coeffs = (cert.alpha, cert.beta, cert.gamma)

    def combine(extra_axes: List[np.ndarray]) -> np.ndarray:
        # alpha term differentiates F_N; beta/gamma terms differentiate psi^1, psi^2
        if extra_axes:
            total = rotational_derivative(table, extra_axes, xi, nodes) @ coeffs[0]
        else:
            total = kernel_derivatives(table, np.clip(X @ cert.nodes_array().T, -1.0, 1.0), 0)[0] @ coeffs[0]
        for r in range(2):
            total = total + rotational_derivative(table, [node_axes[..., r, :]] + extra_axes, xi, nodes) @ coeffs[r + 1]
        return total

    if derivative == "none":
        return combine([])
    point_axes = _point_axes(X)[:, None, :, :]
    if derivative == "gradient":
        return np.stack([combine([point_axes[..., r, :]]) for r in range(2)], axis=-1)
    if derivative == "hessian":
        out = np.empty((X.shape[0], 2, 2))
        for r1 in range(2):
            for r2 in range(r1, 2):
                out[:, r1, r2] = combine([point_axes[..., r2, :], point_axes[..., r1, :]])
                out[:, r2, r1] = out[:, r1, r2]
        return out
    raise ValueError(f"Unknown derivative spec '{derivative}' (use none, gradient or hessian)")


def evaluate_many(cert: Certificate, points: np.ndarray, derivative: DerivativeSpec = "none") -> np.ndarray:
    """q, its gradient (P, 2) or Hessian (P, 2, 2) at each row of `points`"""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    step = max(1, EVAL_CHUNK // max(1, len(cert.nodes)))
    parts = [_evaluate_chunk(cert, X[i:i + step], derivative) for i in range(0, X.shape[0], step)]
    return np.concatenate(parts, axis=0)


def eval_certificate(cert: Certificate, xi: Union[SpherePoint, np.ndarray],
                     derivative: DerivativeSpec = "none") -> Union[float, np.ndarray]:
    """
    q(xi), or its gradient / Hessian with respect to the two rotation
    generators anchored at xi itself.
    """
    arr = xi.as_array() if isinstance(xi, SpherePoint) else np.asarray(xi, dtype=float)
    out = evaluate_many(cert, arr.reshape(1, 3), derivative)[0]
    return float(out) if derivative == "none" else out


def _near_points(cert: Certificate, radius: float, near_samples: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two concentric rings (radius/2 and radius) around each node"""
    s = len(cert.nodes)
    inner = near_samples // 2
    outer = near_samples - inner
    theta = np.concatenate([np.full(inner, radius / 2), np.full(outer, radius)])
    psi = np.concatenate([2 * np.pi * np.arange(inner) / max(inner, 1),
                          2 * np.pi * (np.arange(outer) + 0.5) / max(outer, 1)])
    base = np.repeat(cert.nodes_array(), near_samples, axis=0)
    pts = geodesic_offset(base, np.tile(theta, s), np.tile(psi, s))
    owner = np.repeat(np.arange(s), near_samples)
    on_rim = np.tile(theta == radius, s)
    return pts, owner, on_rim


def _concave(signed_hessians: np.ndarray) -> np.ndarray:
    det = np.linalg.det(signed_hessians)
    trace = np.trace(signed_hessians, axis1=-2, axis2=-1)
    return (det > 0) & (trace < 0)


def validate_certificate(cert: Certificate, far_grid_size: Optional[int] = None,
                         near_radius: Optional[float] = None,
                         near_samples: int = DEFAULT_NEAR_SAMPLES,
                         verbose: bool = False) -> CertificateReport:
    """
    Evidence that q certifies its support: |q| on a Fibonacci grid outside
    caps of radius `near_radius` around the nodes, negative definiteness of
    u_m Hess q at each node and on two rings inside its cap, and |q| < 1 on
    the cap rim. Failures are report fields.
    """
    N = cert.N
    M = far_grid_size or max(FAR_GRID_FACTOR * N * N, MIN_FAR_GRID)
    radius = near_radius if near_radius is not None else DEFAULT_SIGMA / N
    X = cert.nodes_array()

    at_nodes = evaluate_many(cert, X)
    interp_error = float(np.abs(at_nodes - cert.signs).max())
    grad_norm = float(np.abs(evaluate_many(cert, X, "gradient")).max())

    grid = fibonacci_array(M)
    nearest = pairwise_distances(grid, X).min(axis=1)
    far = grid[nearest > radius]
    far_field_max = float(np.abs(evaluate_many(cert, far)).max()) if far.size else 0.0
    if verbose:
        print(f"🌐 Far field: max |q| = {far_field_max:.6f} over {far.shape[0]} of {M} grid points")

    near, owner, on_rim = _near_points(cert, radius, near_samples)
    near_values = evaluate_many(cert, near)
    near_field_max = float(np.abs(near_values[on_rim]).max()) if on_rim.any() else 0.0
    hess_nodes = evaluate_many(cert, X, "hessian") * cert.signs[:, None, None]
    hess_near = evaluate_many(cert, near, "hessian") * cert.signs[owner][:, None, None]
    hessian_ok = bool(_concave(hess_nodes).all() and _concave(hess_near).all() and near_field_max < 1.0)
    if verbose:
        status = "✅" if hessian_ok else "❌"
        print(f"{status} Near field: max |q| on rims = {near_field_max:.6f}, Hessian test {'passed' if hessian_ok else 'failed'}")

    return CertificateReport(
        interp_error=interp_error,
        grad_norm=grad_norm,
        off_support_max=max(far_field_max, near_field_max),
        hessian_ok=hessian_ok,
        system_diagnostics=cert.diagnostics,
        far_field_max=far_field_max,
        near_field_max=near_field_max,
    )


@dataclass
class NonnegativeCertificate:
    """q(xi) = 1 - 2^{-(s+1)} prod_m (1 - xi . xi_m), a degree-s polynomial"""
    nodes: np.ndarray

    @property
    def degree(self) -> int:
        return self.nodes.shape[0]

    def deficit(self, xi: Union[SpherePoint, np.ndarray]) -> Union[float, np.ndarray]:
        """1 - q(xi), kept exact near the nodes where q itself rounds to 1"""
        arr = xi.as_array() if isinstance(xi, SpherePoint) else np.asarray(xi, dtype=float)
        pts = np.atleast_2d(arr)
        value = np.prod(1.0 - pts @ self.nodes.T, axis=1) / 2.0 ** (self.degree + 1)
        return float(value[0]) if arr.ndim == 1 else value

    def __call__(self, xi: Union[SpherePoint, np.ndarray]) -> Union[float, np.ndarray]:
        return 1.0 - self.deficit(xi)


def nonneg_certificate(nodes: Sequence[SpherePoint], N: int) -> NonnegativeCertificate:
    if len(nodes) > N:
        raise SparsityViolationError(f"Non-negative certificate needs s <= N, got s = {len(nodes)} > N = {N}")
    return NonnegativeCertificate(points_to_array(nodes))


def validate_nonneg_certificate(cert: NonnegativeCertificate, far_grid_size: int = MIN_FAR_GRID,
                                near_radius: float = 0.0) -> CertificateReport:
    """
    Range check 0 <= q < 1 away from the nodes on a Fibonacci grid. The
    product form has zero gradient at every node, and q < 1 with q(xi_m) = 1
    already makes each node a strict maximum, so the range check stands in
    for the Hessian test.
    """
    X = cert.nodes
    interp_error = float(np.abs(cert(X) - 1.0).max())
    grid = fibonacci_array(far_grid_size)
    away = grid[pairwise_distances(grid, X).min(axis=1) > max(near_radius, 1e-12)]
    deficit = cert.deficit(away) if away.size else np.zeros(0)
    values = 1.0 - deficit
    far_max = float(values.max()) if values.size else 0.0
    in_range = bool(values.size == 0 or (deficit.max() <= 1.0 and deficit.min() > 0.0))
    return CertificateReport(
        interp_error=interp_error,
        grad_norm=0.0,
        off_support_max=float(np.abs(values).max()) if values.size else 0.0,
        hessian_ok=in_range,
        far_field_max=far_max,
    )


def heatmap_export(cert, lat_steps: int, lon_steps: int, path: Optional[str] = None) -> List[Tuple[float, float, float]]:
    """
    q on an equiangular lat/lon grid, as rows (lat, lon, q) in degrees.
    Accepts a Certificate or a NonnegativeCertificate.
    """
    lat = np.linspace(-90.0, 90.0, lat_steps)
    lon = np.linspace(-180.0, 180.0, lon_steps, endpoint=False)
    LAT, LON = np.meshgrid(lat, lon, indexing="ij")
    la, lo = np.radians(LAT.ravel()), np.radians(LON.ravel())
    pts = np.column_stack([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)])
    q = evaluate_many(cert, pts) if isinstance(cert, Certificate) else cert(pts)
    rows = [(float(a), float(b), float(v)) for a, b, v in zip(LAT.ravel(), LON.ravel(), q)]
    if path:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["lat", "lon", "q"])
            for row in rows:
                writer.writerow([repr(v) for v in row])
    return rows


def ring_counts(nodes: Sequence[SpherePoint], centre: int, nu: float, N: int) -> np.ndarray:
    """
    Number of nodes in each ring {nu m / N < d(xi, xi_centre) <= nu (m+1) / N},
    m = 0 .. floor(pi N / nu - 1).
    """
    X = points_to_array(nodes)
    dist = pairwise_distances(X[centre:centre + 1], X)[0]
    width = nu / N
    rings = int(math.floor(math.pi / width - 1)) + 1
    counts = np.zeros(max(rings, 1), dtype=int)
    for k, d in enumerate(dist):
        if k == centre or d <= 0:
            continue
        m = min(int(math.ceil(d / width)) - 1, counts.size - 1)
        counts[max(m, 0)] += 1
    return counts

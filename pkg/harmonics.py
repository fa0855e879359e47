"""
Legendre/Gegenbauer evaluation, a real orthonormal spherical-harmonic basis
on S^2, projection kernels and the forward moment operator.

Basis convention: Y_{n,j} with j = 1 the zonal (m = 0) harmonic, j = 2k the
cosine harmonic of order k and j = 2k + 1 the sine harmonic of order k,
orthonormal on the sphere of area 4*pi, no Condon-Shortley phase.
"""

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.special import eval_gegenbauer

from sphere_geometry import SpherePoint, pairwise_distances, points_to_array

MAX_DERIVATIVE_ORDER = 3

ArrayLike = Union[float, Sequence[float], np.ndarray]


class UnsupportedOrderError(ValueError):
    """Raised for derivative orders outside 0..3."""


class IndexOutOfRangeError(ValueError):
    """Raised for harmonic indices outside 0 <= n, 1 <= j <= 2n+1."""


@dataclass
class DiracEnsemble:
    """Finite signed sum of point masses: atoms are (weight, location) pairs"""
    atoms: List[Tuple[float, SpherePoint]] = field(default_factory=list)

    def __post_init__(self):
        self.atoms = [(float(w), p) for w, p in self.atoms]
        if len(self.atoms) >= 2:
            dist = pairwise_distances(self.locations_array())
            np.fill_diagonal(dist, np.inf)
            if dist.min() <= 0.0:
                raise ValueError("Dirac ensemble locations must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.atoms)

    def __add__(self, other: "DiracEnsemble") -> "DiracEnsemble":
        merged = {}
        for w, p in self.atoms + other.atoms:
            key = (p.x, p.y, p.z)
            w0, _ = merged.get(key, (0.0, p))
            merged[key] = (w0 + w, p)
        return DiracEnsemble(list(merged.values()))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.atoms], dtype=float)

    @property
    def locations(self) -> List[SpherePoint]:
        return [p for _, p in self.atoms]

    def locations_array(self) -> np.ndarray:
        return points_to_array(self.locations)

    def tv_norm(self) -> float:
        return float(np.abs(self.weights).sum())

    def to_csv(self, path: str):
        """Rows `x,y,z,weight`"""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            for w, p in self.atoms:
                writer.writerow([repr(p.x), repr(p.y), repr(p.z), repr(w)])

    @classmethod
    def from_csv(cls, path: str) -> "DiracEnsemble":
        atoms = []
        with open(path, newline="") as f:
            for row in csv.reader(f):
                if not row:
                    continue
                try:
                    x, y, z, w = (float(v) for v in row[:4])
                except ValueError:
                    continue
                atoms.append((w, SpherePoint(x, y, z)))
        return cls(atoms)


@dataclass
class MomentVector:
    """Coefficients y_{n,j}, stored in (n, j) lexicographic order"""
    degree: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.degree < 0:
            raise ValueError(f"Degree must be non-negative, got {self.degree}")
        if self.values.size != num_coefficients(self.degree):
            raise ValueError(
                f"MomentVector of degree {self.degree} needs {num_coefficients(self.degree)} values, "
                f"got {self.values.size}"
            )

    def __add__(self, other: "MomentVector") -> "MomentVector":
        if other.degree != self.degree:
            raise ValueError("Cannot add moment vectors of different degree")
        return MomentVector(self.degree, self.values + other.values)

    def get(self, n: int, j: int) -> float:
        return float(self.values[coefficient_index(n, j)])

    def to_json(self) -> str:
        return json.dumps({"N": self.degree, "values": [float(v) for v in self.values]}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MomentVector":
        data = json.loads(text)
        return cls(int(data["N"]), np.array(data["values"], dtype=float))

    def save(self, path: str):
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "MomentVector":
        with open(path) as f:
            return cls.from_json(f.read())


def num_coefficients(N: int) -> int:
    return (N + 1) ** 2


def coefficient_index(n: int, j: int) -> int:
    if n < 0 or not 1 <= j <= 2 * n + 1:
        raise IndexOutOfRangeError(f"Harmonic index (n={n}, j={j}) out of range")
    return n * n + j - 1


def _check_order(order: int):
    if not 0 <= order <= MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"Derivative order {order} not supported (max {MAX_DERIVATIVE_ORDER})")


def legendre_series(coeffs: Sequence[float], t: ArrayLike, max_order: int = 0) -> np.ndarray:
    """
    Evaluate sum_n coeffs[n] * P_n^(l)(t) for l = 0..max_order.

    Runs the three-term recurrence differentiated term by term,
        n P_n^(k) = (2n-1)(t P_{n-1}^(k) + k P_{n-1}^(k-1)) - (n-1) P_{n-2}^(k),
    keeping only two degrees in memory.

    Returns:
        Array of shape (max_order + 1,) + shape(t)
    """
    _check_order(max_order)
    coeffs = np.asarray(coeffs, dtype=float)
    t = np.asarray(t, dtype=float)
    K = max_order + 1
    out = np.zeros((K,) + t.shape)
    if coeffs.size == 0:
        return out
    prev = np.zeros((K,) + t.shape)
    prev[0] = 1.0
    out += coeffs[0] * prev
    if coeffs.size == 1:
        return out
    cur = np.zeros((K,) + t.shape)
    cur[0] = t
    if K > 1:
        cur[1] = 1.0
    out += coeffs[1] * cur
    for n in range(2, coeffs.size):
        nxt = np.empty_like(cur)
        for k in range(K):
            lifted = t * cur[k] + (k * cur[k - 1] if k > 0 else 0.0)
            nxt[k] = ((2 * n - 1) * lifted - (n - 1) * prev[k]) / n
        prev, cur = cur, nxt
        if coeffs[n] != 0.0:
            out += coeffs[n] * cur
    return out


def legendre(n: int, t: ArrayLike, order: int = 0) -> Union[float, np.ndarray]:
    """order-th derivative of the Legendre polynomial P_n at t"""
    _check_order(order)
    if n < 0:
        raise ValueError(f"Degree must be non-negative, got {n}")
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    value = legendre_series(coeffs, t, order)[order]
    return float(value) if np.ndim(value) == 0 else value


def gegenbauer(n: int, d: int, t: ArrayLike) -> Union[float, np.ndarray]:
    """Gegenbauer polynomial P_{n,d} on S^{d-1}, normalized so P_{n,d}(1) = 1"""
    lam = (d - 2) / 2.0
    if lam == 0:
        value = np.cos(n * np.arccos(np.clip(t, -1.0, 1.0)))
    else:
        value = eval_gegenbauer(n, lam, t) / eval_gegenbauer(n, lam, 1.0)
    return float(value) if np.ndim(value) == 0 else value


def legendre_derivative_via_lift(n: int, t: ArrayLike) -> Union[float, np.ndarray]:
    """P_n'(t) = n(n+1)/2 * P_{n-1,5}(t)"""
    if n == 0:
        return 0.0 * np.asarray(t, dtype=float)
    return n * (n + 1) / 2.0 * gegenbauer(n - 1, 5, t)


def harmonics_matrix(N: int, points: np.ndarray) -> np.ndarray:
    """
    All basis values Y_{n,j}(p) for n <= N.

    Returns:
        Array of shape ((N+1)^2, P); row n^2 + j - 1 holds Y_{n,j}
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    u = np.sqrt(x * x + y * y)
    phi = np.arctan2(y, x)
    out = np.zeros((num_coefficients(N), pts.shape[0]))
    root2 = math.sqrt(2.0)

    pmm = np.full(pts.shape[0], 1.0 / math.sqrt(4 * math.pi))
    for m in range(N + 1):
        if m > 0:
            pmm = math.sqrt((2 * m + 1) / (2.0 * m)) * u * pmm
        if m == 0:
            scale_cos, scale_sin = None, None
        else:
            scale_cos = root2 * np.cos(m * phi)
            scale_sin = root2 * np.sin(m * phi)

        p_prev, p_cur = None, pmm
        for n in range(m, N + 1):
            if n == m + 1:
                p_prev, p_cur = p_cur, math.sqrt(2 * m + 3) * z * p_cur
            elif n > m + 1:
                a = math.sqrt((4 * n * n - 1) / (n * n - m * m))
                b = math.sqrt(((n - 1) ** 2 - m * m) / (4 * (n - 1) ** 2 - 1))
                p_prev, p_cur = p_cur, a * (z * p_cur - b * p_prev)
            if m == 0:
                out[n * n] = p_cur
            else:
                out[n * n + 2 * m - 1] = p_cur * scale_cos
                out[n * n + 2 * m] = p_cur * scale_sin
    return out


def real_sph_harmonic(n: int, j: int, p: SpherePoint) -> float:
    row = coefficient_index(n, j)
    return float(harmonics_matrix(n, p.as_array()[None, :])[row, 0])


def projection_kernel(N: int, t: ArrayLike) -> Union[float, np.ndarray]:
    """K_N(t) = sum_{n<=N} (2n+1)/(4 pi) P_n(t)"""
    coeffs = (2 * np.arange(N + 1) + 1) / (4 * math.pi)
    value = legendre_series(coeffs, t, 0)[0]
    return float(value) if np.ndim(value) == 0 else value


def moments(f: DiracEnsemble, N: int) -> MomentVector:
    if N < 0:
        raise ValueError(f"Degree must be non-negative, got {N}")
    if len(f) == 0:
        return MomentVector(N, np.zeros(num_coefficients(N)))
    return MomentVector(N, harmonics_matrix(N, f.locations_array()) @ f.weights)


def sampling_matrix(grid: Union[Sequence[SpherePoint], np.ndarray], N: int) -> np.ndarray:
    """Column k holds {Y_{n,j}(grid_k)}; moments of an on-grid ensemble are A @ weights"""
    arr = grid if isinstance(grid, np.ndarray) else points_to_array(grid)
    if arr.shape[0] == 0:
        raise ValueError("Sampling grid must be nonempty")
    return harmonics_matrix(N, arr)


def write_matrix_binary(path: str, matrix: np.ndarray):
    """8-byte header (rows, cols as little-endian int32) then row-major float64"""
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    rows, cols = matrix.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<ii", rows, cols))
        f.write(matrix.tobytes(order="C"))


def read_matrix_binary(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        rows, cols = struct.unpack("<ii", f.read(8))
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: header says {rows}x{cols}, found {data.size} values")
    return data.reshape(rows, cols).astype(float)

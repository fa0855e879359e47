"""
Points on the unit sphere, geodesic distances, tangent frames and the
rotation generators behind the rotational derivatives.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm
from scipy.spatial import cKDTree

GOLDEN_RATIO = (1 + np.sqrt(5)) / 2

# Reference axis for tangent frames and the fallback used near its poles
REFERENCE_AXIS = np.array([0.0, 0.0, 1.0])
POLE_FALLBACK_AXIS = np.array([1.0, 0.0, 0.0])
POLE_THRESHOLD = 1 - 1e-6


class SeparationUndefinedError(ValueError):
    """Raised when a separation is requested for fewer than two points."""


@dataclass(frozen=True)
class SpherePoint:
    """Unit vector on S^2; renormalized on construction"""
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if norm == 0.0 or not math.isfinite(norm):
            raise ValueError(f"Cannot place ({self.x}, {self.y}, {self.z}) on the sphere")
        object.__setattr__(self, "x", float(self.x) / norm)
        object.__setattr__(self, "y", float(self.y) / norm)
        object.__setattr__(self, "z", float(self.z) / norm)

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "SpherePoint":
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def from_lat_lon(cls, lat_deg: float, lon_deg: float) -> "SpherePoint":
        lat, lon = math.radians(lat_deg), math.radians(lon_deg)
        return cls(math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def lat_lon(self) -> Tuple[float, float]:
        """Latitude and longitude in degrees"""
        lat = math.degrees(math.asin(max(-1.0, min(1.0, self.z))))
        lon = math.degrees(math.atan2(self.y, self.x))
        return lat, lon

    def dot(self, other: "SpherePoint") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z


@dataclass(frozen=True)
class TangentFrame:
    """Right-handed orthonormal frame (t1, t2, base) at a point"""
    base: SpherePoint
    t1: Tuple[float, float, float]
    t2: Tuple[float, float, float]

    def __post_init__(self):
        p = self.base.as_array()
        t1, t2 = np.asarray(self.t1, float), np.asarray(self.t2, float)
        if max(abs(t1 @ p), abs(t2 @ p), abs(t1 @ t2)) > 1e-10:
            raise ValueError("Tangent vectors must be orthogonal to the base point and to each other")
        if abs(np.cross(t1, t2) @ p - 1.0) > 1e-10:
            raise ValueError("Tangent frame must be right-handed and orthonormal")

    def vectors(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.t1, float), np.asarray(self.t2, float)

    def rotated(self, angle: float) -> "TangentFrame":
        """Same base point, tangent pair rotated by `angle` in the tangent plane"""
        t1, t2 = self.vectors()
        c, s = math.cos(angle), math.sin(angle)
        return TangentFrame(self.base, tuple(c * t1 + s * t2), tuple(-s * t1 + c * t2))


@dataclass(frozen=True)
class RotationGenerator:
    """
    Skew-symmetric matrix M whose flow exp(-tM) rotates `axis_point` along
    the tangent direction t_r of its frame at unit speed.
    """
    axis_point: SpherePoint
    direction_index: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.direction_index not in (1, 2):
            raise ValueError(f"direction_index must be 1 or 2, got {self.direction_index}")
        m = np.array(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def rotation(self, t: float) -> np.ndarray:
        return expm(-t * self.matrix)

    def axis(self) -> np.ndarray:
        """Vector a with (-M) v = a x v"""
        a = -self.matrix
        return np.array([a[2, 1], a[0, 2], a[1, 0]])

    def velocity(self, v: np.ndarray) -> np.ndarray:
        """d/dt exp(-tM) v at t = 0"""
        return -self.matrix @ np.asarray(v, float)


def skew(v: np.ndarray) -> np.ndarray:
    """Hat map: skew(v) @ w == cross(v, w)"""
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def points_to_array(points: Sequence[SpherePoint]) -> np.ndarray:
    return np.array([[p.x, p.y, p.z] for p in points], dtype=float).reshape(-1, 3)


def points_from_array(arr: np.ndarray) -> List[SpherePoint]:
    return [SpherePoint.from_array(row) for row in np.asarray(arr, float).reshape(-1, 3)]


def geodesic_distance(a: SpherePoint, b: SpherePoint) -> float:
    return math.acos(max(-1.0, min(1.0, a.dot(b))))


def pairwise_distances(arr: np.ndarray, other: Optional[np.ndarray] = None) -> np.ndarray:
    """Geodesic distance matrix between two arrays of unit vectors"""
    other = arr if other is None else other
    return np.arccos(np.clip(arr @ other.T, -1.0, 1.0))


def tangent_frames(arr: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized tangent_frame: returns (t1, t2), each of shape (P, 3)"""
    arr = np.atleast_2d(arr)
    near_pole = np.abs(arr @ REFERENCE_AXIS) > POLE_THRESHOLD
    ref = np.where(near_pole[:, None], POLE_FALLBACK_AXIS, REFERENCE_AXIS)
    t1 = np.cross(ref, arr)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(arr, t1)
    return t1, t2


def tangent_frame(p: SpherePoint) -> TangentFrame:
    t1, t2 = tangent_frames(p.as_array()[None, :])
    return TangentFrame(p, tuple(t1[0]), tuple(t2[0]))


def frame_axes(base: np.ndarray, t1: np.ndarray, t2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rotation axes of the two generators of a frame. The generator for
    direction r acts as v -> a_r x v with a_r = base x t_r, so that
    a_1 = t2 and a_2 = -t1 for a right-handed frame.
    """
    return np.cross(base, t1), np.cross(base, t2)


def rotation_generator(p: SpherePoint, r: int, frame: Optional[TangentFrame] = None) -> RotationGenerator:
    if r not in (1, 2):
        raise ValueError(f"Rotation direction must be 1 or 2, got {r}")
    frame = frame or tangent_frame(p)
    if frame.base != p:
        raise ValueError("Frame is anchored at a different point")
    base = p.as_array()
    axes = frame_axes(base, *frame.vectors())
    return RotationGenerator(p, r, -skew(axes[r - 1]))


def fibonacci_grid(M: int) -> List[SpherePoint]:
    return points_from_array(fibonacci_array(M))


def fibonacci_array(M: int) -> np.ndarray:
    """Golden-angle lattice with M points, as an (M, 3) array"""
    if M < 1:
        raise ValueError(f"Grid size must be positive, got {M}")
    k = np.arange(M) + 0.5
    z = 1 - 2 * k / M
    phi = 2 * np.pi * k / GOLDEN_RATIO
    rho = np.sqrt(np.clip(1 - z * z, 0.0, None))
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def grid_spacing(M: int) -> float:
    """Typical nearest-neighbour spacing of an M-point quasi-uniform grid"""
    return math.sqrt(4 * math.pi / M)


def closest_pair(points: Sequence[SpherePoint]) -> Tuple[int, int, float]:
    if len(points) < 2:
        raise SeparationUndefinedError(f"Separation needs at least 2 points, got {len(points)}")
    dist = pairwise_distances(points_to_array(points))
    np.fill_diagonal(dist, np.inf)
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    i, j = int(min(i, j)), int(max(i, j))
    return i, j, float(dist[i, j])


def min_separation(points: Sequence[SpherePoint]) -> float:
    return closest_pair(points)[2]


def snap_to_grid(points: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Index of the nearest grid point (chordal metric) for every point"""
    tree = cKDTree(grid)
    _, idx = tree.query(np.atleast_2d(points))
    return np.asarray(idx, dtype=int)


def write_points_csv(path: str, points: Sequence[SpherePoint], extra: Optional[Sequence[Sequence[float]]] = None):
    """Write rows `x,y,z[,extra...]`"""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for i, p in enumerate(points):
            row = [repr(p.x), repr(p.y), repr(p.z)]
            if extra is not None:
                row += [repr(float(v)) for v in extra[i]]
            writer.writerow(row)


def read_points_csv(path: str) -> Tuple[List[SpherePoint], List[List[float]]]:
    """Read rows `x,y,z[,extra...]`; returns points and the extra columns"""
    points, extra = [], []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                values = [float(v) for v in row]
            except ValueError:
                # header line
                continue
            if len(values) < 3:
                raise ValueError(f"Expected at least 3 columns in {path}, got {row}")
            points.append(SpherePoint(*values[:3]))
            extra.append(values[3:])
    return points, extra


def points_to_json(points: Sequence[SpherePoint]) -> str:
    return json.dumps([[p.x, p.y, p.z] for p in points])


def points_from_json(text: str) -> List[SpherePoint]:
    return [SpherePoint(*row) for row in json.loads(text)]


def geodesic_offset(base: np.ndarray, theta: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """
    Points at geodesic distance `theta` from `base`, leaving in the tangent
    direction cos(psi) t1 + sin(psi) t2 of the base point's frame.
    """
    base = np.atleast_2d(base)
    theta = np.asarray(theta, float).reshape(-1, 1)
    psi = np.asarray(psi, float).reshape(-1, 1)
    t1, t2 = tangent_frames(base)
    direction = np.cos(psi) * t1 + np.sin(psi) * t2
    out = np.cos(theta) * base + np.sin(theta) * direction
    return out / np.linalg.norm(out, axis=1, keepdims=True)

"""
The smoothed, normalized zonal kernel F_N and its rotational derivatives.

F_N(t) = C(N) * sum_{n<=N} rho(n/N) (2n+1)/(4 pi) P_n(t), with C(N) chosen so
that F_N(1) = 1. Rotational derivatives of xi -> F_N(xi . xi0) along up to
three generator flows are expanded with the Leibniz rule over the bilinear
form xi . xi0, so every order reduces to univariate derivatives of F_N.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from harmonics import MAX_DERIVATIVE_ORDER, UnsupportedOrderError, legendre_series
from sphere_geometry import RotationGenerator, SpherePoint, geodesic_offset

LOCALIZATION_ORDERS = (3, 4, 5)
DEFAULT_SCAN_POINTS = 20001
# Lipschitz samples place xi0 within this many multiples of 1/N from eta
LIPSCHITZ_SPREAD = 15.0


class DomainError(ValueError):
    """Raised for arguments outside the domain of a kernel quantity."""


@dataclass(frozen=True)
class KernelTable:
    """Coefficients c_n = rho(n/N)(2n+1)/(4 pi) and the normalization C(N)"""
    N: int
    coeffs: np.ndarray = field(repr=False)
    normalization: float

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def rho(t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Smooth cutoff: 1 on [0, 1/2], 0 on [1, inf), and
    phi(2-2t) / (phi(2-2t) + phi(2t-1)) in between, phi(s) = exp(-1/s).
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise DomainError(f"rho is defined for t >= 0, got {t}")
    out = np.where(arr <= 0.5, 1.0, 0.0)
    mid = (arr > 0.5) & (arr < 1.0)
    if np.any(mid):
        a = _bump(2 - 2 * arr[mid])
        b = _bump(2 * arr[mid] - 1)
        out[mid] = a / (a + b)
    return float(out) if out.ndim == 0 else out


def build_kernel(N: int) -> KernelTable:
    if N < 2:
        raise DomainError(f"Kernel degree must be at least 2, got {N}")
    n = np.arange(N + 1)
    coeffs = rho(n / N) * (2 * n + 1) / (4 * math.pi)
    return KernelTable(N, coeffs, 1.0 / coeffs.sum())


def kernel_derivatives(table: KernelTable, t: Union[float, np.ndarray], max_order: int) -> np.ndarray:
    """F_N^(l)(t) for l = 0..max_order; shape (max_order + 1,) + shape(t)"""
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1 + 1e-9):
        raise DomainError("Kernel argument must lie in [-1, 1]")
    return table.normalization * legendre_series(table.coeffs, np.clip(t, -1.0, 1.0), max_order)


def eval_kernel(table: KernelTable, t: Union[float, np.ndarray], order: int = 0) -> Union[float, np.ndarray]:
    if not 0 <= order <= MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"Derivative order {order} not supported (max {MAX_DERIVATIVE_ORDER})")
    value = kernel_derivatives(table, t, order)[order]
    return float(value) if np.ndim(value) == 0 else value


def derivative_at_one(table: KernelTable) -> float:
    """F_N'(1) = C(N) sum_n c_n n(n+1)/2, using P_n'(1) = n(n+1)/2"""
    n = np.arange(table.N + 1)
    return float(table.normalization * np.sum(table.coeffs * n * (n + 1) / 2.0))


def rot_deriv_G(gen: RotationGenerator, xi: SpherePoint, xi0: SpherePoint) -> float:
    """d/dt (exp(-tM) xi) . xi0 at t = 0"""
    return float(gen.velocity(xi.as_array()) @ xi0.as_array())


def _set_partitions(items: Tuple[int, ...]) -> Iterator[List[Tuple[int, ...]]]:
    """Partitions of `items` into blocks; blocks keep ascending order"""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for size in range(len(rest) + 1):
        for others in combinations(rest, size):
            block = (first,) + others
            remaining = tuple(i for i in rest if i not in others)
            for tail in _set_partitions(remaining):
                yield [block] + tail


def rotational_derivative(table: KernelTable, axes: Sequence[np.ndarray],
                          xi: np.ndarray, xi0: np.ndarray) -> np.ndarray:
    """
    Vectorized iterated rotational derivative of xi -> F_N(xi . xi0).

    Generator i acts as v -> axes[i] x v. The derivative along axes[0] is
    taken first and axes[-1] last, so each set partition of the generators
    contributes F_N^(#blocks)(xi . xi0) times the product over blocks of
    (A_b1 A_b2 ... xi) . xi0 with the block indices ascending left to right.

    Args:
        axes: 1 to 3 arrays broadcastable against xi
        xi, xi0: unit vectors, trailing dimension 3, mutually broadcastable

    Returns:
        Array with the broadcast shape of xi . xi0
    """
    order = len(axes)
    if not 1 <= order <= MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"Rotational derivatives need 1 to {MAX_DERIVATIVE_ORDER} generators, got {order}")
    xi = np.asarray(xi, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    derivs = kernel_derivatives(table, np.sum(xi * xi0, axis=-1), order)

    block_values = {}

    def block_value(block: Tuple[int, ...]) -> np.ndarray:
        if block not in block_values:
            v = xi
            for i in reversed(block):
                v = np.cross(axes[i], v)
            block_values[block] = np.sum(v * xi0, axis=-1)
        return block_values[block]

    total = np.zeros_like(derivs[0])
    for partition in _set_partitions(tuple(range(order))):
        term = derivs[len(partition)].copy()
        for block in partition:
            term = term * block_value(block)
        total = total + term
    return total


def rot_deriv_F(table: KernelTable, gens: Sequence[RotationGenerator], xi: SpherePoint, xi0: SpherePoint) -> float:
    """
    Iterated rotational derivative D_{gens[-1]} ... D_{gens[0]} of
    xi -> F_N(xi . xi0). Order 1 is F_N'(xi . xi0) (A_1 xi) . xi0.
    """
    if not 1 <= len(gens) <= MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"Rotational derivatives need 1 to {MAX_DERIVATIVE_ORDER} generators, got {len(gens)}")
    axes = [g.axis() for g in gens]
    return float(rotational_derivative(table, axes, xi.as_array(), xi0.as_array()))


def _check_scan_args(k: int, order: int):
    if k not in LOCALIZATION_ORDERS:
        raise DomainError(f"Localization order k must be one of {LOCALIZATION_ORDERS}, got {k}")
    if not 0 <= order <= MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"Derivative order {order} not supported (max {MAX_DERIVATIVE_ORDER})")


def scan_profile(table: KernelTable, k: int, order: int = 0,
                 num_theta: int = DEFAULT_SCAN_POINTS) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Rows (theta, F_N^(l)(cos theta), envelope) on [0, pi], where the envelope
    c N^{2l} / (1 + N theta)^k uses the fitted constant c.
    """
    _check_scan_args(k, order)
    N = table.N
    theta = np.linspace(0.0, math.pi, num_theta)
    value = eval_kernel(table, np.cos(theta), order)
    weight = (1 + N * theta) ** k / float(N) ** (2 * order)
    c = float(np.max(np.abs(value) * weight))
    return theta, value, c / weight


def localization_scan(table: KernelTable, k: int, order: int = 0, num_theta: int = DEFAULT_SCAN_POINTS) -> float:
    """sup over a dense theta grid of |F_N^(l)(cos theta)| (1 + N theta)^k / N^{2l}"""
    _check_scan_args(k, order)
    N = table.N
    theta = np.linspace(0.0, math.pi, num_theta)
    value = eval_kernel(table, np.cos(theta), order)
    return float(np.max(np.abs(value) * (1 + N * theta) ** k / float(N) ** (2 * order)))


def lipschitz_scan(table: KernelTable, order: int = 0, samples: int = 2000,
                   rng: Optional[np.random.Generator] = None) -> float:
    """
    Fitted constant C in
        |F_N^(l)(eta1 . xi0) - F_N^(l)(eta2 . xi0)|
            <= C d(eta1, eta2) N^{2l+1} / (1 + N d(eta, xi0))^3
    for eta1, eta2 within 1/N of eta. Distances are drawn in units of 1/N so
    the estimate is comparable across N.
    """
    if not 0 <= order <= MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(f"Derivative order {order} not supported (max {MAX_DERIVATIVE_ORDER})")
    rng = rng if rng is not None else np.random.default_rng(0)
    N = table.N

    eta = rng.normal(size=(samples, 3))
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    dist0 = np.minimum(rng.uniform(0.0, LIPSCHITZ_SPREAD, samples) / N, math.pi)
    xi0 = geodesic_offset(eta, dist0, rng.uniform(0, 2 * math.pi, samples))
    eta1 = geodesic_offset(eta, rng.uniform(0.0, 1.0, samples) / N, rng.uniform(0, 2 * math.pi, samples))
    eta2 = geodesic_offset(eta, rng.uniform(0.0, 1.0, samples) / N, rng.uniform(0, 2 * math.pi, samples))

    # chordal form keeps precision for nearby points
    d12 = 2 * np.arcsin(np.clip(np.linalg.norm(eta1 - eta2, axis=1) / 2, 0.0, 1.0))
    keep = d12 > 1e-9
    f1 = eval_kernel(table, np.sum(eta1 * xi0, axis=1), order)
    f2 = eval_kernel(table, np.sum(eta2 * xi0, axis=1), order)
    ratio = np.abs(f1 - f2)[keep] * (1 + N * dist0[keep]) ** 3 / (d12[keep] * float(N) ** (2 * order + 1))
    return float(ratio.max()) if ratio.size else 0.0

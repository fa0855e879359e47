"""
Grid-discretized total-variation minimization

    min ||w||_1  subject to  A w = y,   A = sampling_matrix(grid, N),

and its non-negative variant, solved by primal-dual splitting, plus support
extraction and exactness reporting against a known ensemble.
"""

import json
import math
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import nnls

from harmonics import DiracEnsemble, MomentVector, moments, num_coefficients, sampling_matrix
from sphere_geometry import SpherePoint, grid_spacing, points_from_array, points_to_array

POWER_ITERATIONS = 50
# termination compares the l1 objective with the value this many iterations back
OBJECTIVE_WINDOW = 50
STEP_SAFETY = 0.99
WEIGHT_FLOOR_RATIO = 1e-4
CLUSTER_RADIUS_FACTOR = 2.0
POLISH_FLOOR_RATIOS = (1e-3, 1e-2)
# the iterate is only feasible to primal_tol, so a refit may exceed its l1 norm slightly
POLISH_SLACK = 1e-3
# dense products switch to the nonzero columns below this fill fraction
SPARSE_FILL = 0.25


@dataclass
class GridMeasure:
    """Discrete measure sum_k w_k delta_{grid_k}"""
    grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.grid = np.atleast_2d(np.asarray(self.grid, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.grid.shape[0] != self.weights.size:
            raise ValueError(f"Grid has {self.grid.shape[0]} points but {self.weights.size} weights")

    @property
    def points(self) -> List[SpherePoint]:
        return points_from_array(self.grid)

    def tv_norm(self) -> float:
        return float(np.abs(self.weights).sum())


@dataclass
class SolverOptions:
    max_iters: int = 20000
    primal_tol: float = 1e-6
    dual_tol: float = 1e-8
    step_ratio: float = 1.0  # tau / sigma
    nonneg: bool = False
    polish: bool = True
    polish_every: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.primal_tol <= 0 or self.dual_tol <= 0:
            raise ValueError("Solver tolerances must be positive")
        if self.step_ratio <= 0:
            raise ValueError(f"step_ratio must be positive, got {self.step_ratio}")
        if self.polish_every < 1:
            raise ValueError(f"polish_every must be at least 1, got {self.polish_every}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverOptions":
        return cls(**data)


@dataclass
class SolverStats:
    iterations: int
    residual: float
    objective: float
    converged: bool
    polished: bool = False


@dataclass
class RecoveryReport:
    support_distance: float
    weight_error: float
    residual: float
    iterations: int = 0
    missed: int = 0
    spurious: int = 0
    converged: bool = True

    def passed(self, support_tol: float, weight_tol: float) -> bool:
        return self.missed == 0 and self.support_distance <= support_tol and self.weight_error <= weight_tol

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def estimate_operator_norm(A: np.ndarray, iters: int = POWER_ITERATIONS,
                           rng: Optional[np.random.Generator] = None) -> float:
    """||A||_2 by power iteration on A^T A"""
    rng = rng if rng is not None else np.random.default_rng(0)
    v = rng.normal(size=A.shape[1])
    v /= np.linalg.norm(v)
    norm = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(math.sqrt(norm))


def _shrink(v: np.ndarray, tau: float, nonneg: bool) -> np.ndarray:
    if nonneg:
        return np.maximum(v - tau, 0.0)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def polish(A: np.ndarray, y: np.ndarray, w: np.ndarray, nonneg: bool = False,
           floor_ratio: float = POLISH_FLOOR_RATIOS[0]) -> Optional[np.ndarray]:
    """
    Least-squares refit of y on the columns where |w| is above
    floor_ratio * max|w| (non-negative least squares when `nonneg`).
    None when the support is empty or larger than the number of moments.
    """
    peak = np.abs(w).max() if w.size else 0.0
    if peak == 0.0:
        return None
    support = np.flatnonzero(np.abs(w) > floor_ratio * peak)
    if support.size > A.shape[0]:
        return None
    sub = A[:, support]
    if nonneg:
        coef, _ = nnls(sub, y)
    else:
        coef, _, _, _ = np.linalg.lstsq(sub, y, rcond=None)
    out = np.zeros_like(w)
    out[support] = coef
    return out


def accept_polished(A, y, w, candidate, y_norm, opts: SolverOptions) -> bool:
    """
    A refit replaces the iterate w when it fits y to primal_tol, keeps the
    signs of w on its support and its l1 norm exceeds that of w by at most
    the relative POLISH_SLACK.
    """
    if candidate is None:
        return False
    if np.linalg.norm(A @ candidate - y) > opts.primal_tol * y_norm:
        return False
    support = candidate != 0
    if np.any(np.sign(candidate[support]) != np.sign(w[support])):
        return False
    l1 = np.abs(w).sum()
    return np.abs(candidate).sum() <= l1 * (1 + POLISH_SLACK)


def _try_polish(A, y, w, y_norm, opts: SolverOptions) -> Optional[np.ndarray]:
    """First refit over POLISH_FLOOR_RATIOS that passes accept_polished"""
    for ratio in POLISH_FLOOR_RATIOS:
        candidate = polish(A, y, w, opts.nonneg, ratio)
        if accept_polished(A, y, w, candidate, y_norm, opts):
            return candidate
    return None


def _forward(A: np.ndarray, w: np.ndarray) -> np.ndarray:
    """A @ w using only the nonzero columns once w is sparse"""
    nz = np.flatnonzero(w)
    if nz.size < SPARSE_FILL * w.size:
        return A[:, nz] @ w[nz]
    return A @ w


def _support_key(w: np.ndarray) -> bytes:
    peak = np.abs(w).max() if w.size else 0.0
    return np.flatnonzero(np.abs(w) > POLISH_FLOOR_RATIOS[0] * peak).tobytes()


def solve_l1(A: np.ndarray, y: np.ndarray, opts: Optional[SolverOptions] = None,
             verbose: bool = False) -> Tuple[np.ndarray, SolverStats]:
    """
    Primal-dual splitting for min ||w||_1 s.t. A w = y (w >= 0 when
    opts.nonneg):

        z     <- z + sigma (A w_bar - y)
        w_new <- shrink(w - tau A^T z, tau)
        w_bar <- 2 w_new - w

    with tau sigma ||A||^2 < 1. Every polish_every iterations the support
    is compared with the previous check; once it holds still (and in any
    case every 10 checks) a refit on it is tried. Otherwise stops when
    ||A w - y|| < primal_tol ||y|| and the relative change of ||w||_1 over
    the last 50 iterations is below dual_tol, or at max_iters with the best
    iterate flagged non-converged.
    """
    opts = opts or SolverOptions()
    y = np.asarray(y, dtype=float)
    M = A.shape[1]
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        return np.zeros(M), SolverStats(0, 0.0, 0.0, True)

    L = estimate_operator_norm(A)
    tau = STEP_SAFETY * math.sqrt(opts.step_ratio) / L
    sigma = STEP_SAFETY / (math.sqrt(opts.step_ratio) * L)

    w = np.zeros(M)
    Aw = np.zeros_like(y)
    Aw_bar = np.zeros_like(y)
    z = np.zeros_like(y)
    history = []
    best_w, best_res = w.copy(), math.inf
    last_support = None
    checks = 0

    for k in range(1, opts.max_iters + 1):
        z += sigma * (Aw_bar - y)
        w_new = _shrink(w - tau * (A.T @ z), tau, opts.nonneg)
        Aw_new = _forward(A, w_new)
        Aw_bar = 2 * Aw_new - Aw
        w, Aw = w_new, Aw_new

        residual = float(np.linalg.norm(Aw - y))
        objective = float(np.abs(w).sum())
        history.append(objective)
        if residual < best_res:
            best_w, best_res = w.copy(), residual

        if verbose and k % 1000 == 0:
            print(f"   [{k}] residual {residual / y_norm:.3e}, ||w||_1 {objective:.6f}")

        if opts.polish and k % opts.polish_every == 0:
            checks += 1
            support = _support_key(w)
            if support == last_support or checks % 10 == 0:
                candidate = _try_polish(A, y, w, y_norm, opts)
                if candidate is not None:
                    residual = float(np.linalg.norm(A @ candidate - y))
                    if verbose:
                        print(f"✨ Polished on {np.count_nonzero(candidate)} grid points after {k} iterations")
                    return candidate, SolverStats(k, residual, float(np.abs(candidate).sum()), True, True)
            last_support = support

        if k > OBJECTIVE_WINDOW and residual < opts.primal_tol * y_norm:
            previous = history[-OBJECTIVE_WINDOW - 1]
            if abs(objective - previous) < opts.dual_tol * max(objective, 1e-300):
                return w, SolverStats(k, residual, objective, True)

    if opts.polish:
        candidate = _try_polish(A, y, best_w, y_norm, opts)
        if candidate is not None:
            residual = float(np.linalg.norm(A @ candidate - y))
            return candidate, SolverStats(opts.max_iters, residual, float(np.abs(candidate).sum()), True, True)
    if verbose:
        print(f"⚠️  No convergence after {opts.max_iters} iterations (residual {best_res / y_norm:.3e})")
    return best_w, SolverStats(opts.max_iters, best_res, float(np.abs(best_w).sum()), False)


def _as_grid_array(grid: Union[Sequence[SpherePoint], np.ndarray]) -> np.ndarray:
    arr = grid if isinstance(grid, np.ndarray) else points_to_array(grid)
    if arr.shape[0] == 0:
        raise ValueError("Recovery grid must be nonempty")
    return arr


def tv_min_recover(y: MomentVector, grid: Union[Sequence[SpherePoint], np.ndarray], N: Optional[int] = None,
                   opts: Optional[SolverOptions] = None, A: Optional[np.ndarray] = None,
                   verbose: bool = False) -> Tuple[GridMeasure, SolverStats]:
    """
    Signed recovery on `grid` from the moments y. `A` may be passed to reuse
    a sampling matrix built for the same grid and degree.
    """
    N = y.degree if N is None else N
    if N != y.degree:
        raise ValueError(f"Moments have degree {y.degree}, requested recovery at degree {N}")
    arr = _as_grid_array(grid)
    if arr.shape[0] < num_coefficients(N):
        raise ValueError(f"Grid needs at least {num_coefficients(N)} points for degree {N}, got {arr.shape[0]}")
    A = sampling_matrix(arr, N) if A is None else A
    if verbose:
        mode = "non-negative" if opts and opts.nonneg else "signed"
        print(f"🔍 Recovering {mode} measure on {arr.shape[0]} grid points from {y.values.size} moments")
    w, stats = solve_l1(A, y.values, opts, verbose)
    return GridMeasure(arr, w), stats


def nonneg_recover(y: MomentVector, grid: Union[Sequence[SpherePoint], np.ndarray], N: Optional[int] = None,
                   opts: Optional[SolverOptions] = None, A: Optional[np.ndarray] = None,
                   verbose: bool = False) -> Tuple[GridMeasure, SolverStats]:
    opts = opts or SolverOptions()
    if not opts.nonneg:
        opts = SolverOptions(**{**opts.to_dict(), "nonneg": True})
    return tv_min_recover(y, grid, N, opts, A, verbose)


def _chordal_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Geodesic distance computed from the chord, accurate for nearby points"""
    chord = np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)
    return 2 * np.arcsin(np.clip(chord / 2, 0.0, 1.0))


def extract_support(m: GridMeasure, weight_floor: Optional[float] = None,
                    cluster_radius: Optional[float] = None) -> DiracEnsemble:
    """
    Collapse a grid measure to a Dirac ensemble: drop |w| < weight_floor,
    then greedily cluster survivors within cluster_radius in order of
    descending |w| (ties by grid index). Each cluster becomes one atom at the
    |w|-weighted chordal mean, carrying the signed sum of its weights.
    """
    mags = np.abs(m.weights)
    peak = mags.max() if mags.size else 0.0
    if peak == 0.0:
        return DiracEnsemble([])
    floor = WEIGHT_FLOOR_RATIO * peak if weight_floor is None else weight_floor
    radius = CLUSTER_RADIUS_FACTOR * grid_spacing(m.grid.shape[0]) if cluster_radius is None else cluster_radius
    if radius < 0:
        raise ValueError(f"cluster_radius must be non-negative, got {radius}")

    idx = np.flatnonzero((mags >= floor) & (mags > 0))
    order = idx[np.lexsort((idx, -mags[idx]))]
    unassigned = set(order.tolist())
    atoms = []
    for seed in order:
        if seed not in unassigned:
            continue
        members = [j for j in order if j in unassigned
                   and _chordal_distance(m.grid[seed], m.grid[j]) <= radius]
        unassigned.difference_update(members)
        weight = float(m.weights[members].sum())
        if len(members) == 1:
            location = m.grid[seed]
        else:
            centre = (mags[members][:, None] * m.grid[members]).sum(axis=0)
            norm = np.linalg.norm(centre)
            location = centre / norm if norm > 0 else m.grid[seed]
        atoms.append((weight, SpherePoint.from_array(location)))
    return DiracEnsemble(atoms)


def recovery_report(truth: DiracEnsemble, recovered: DiracEnsemble, y: Optional[MomentVector] = None,
                    A: Optional[np.ndarray] = None, measure: Optional[GridMeasure] = None,
                    stats: Optional[SolverStats] = None) -> RecoveryReport:
    """
    Greedy nearest matching of true atoms (largest |c| first) to recovered
    atoms. Unmatched true atoms count as distance pi and weight error |c|;
    leftover recovered atoms count as spurious with weight error |c|. The
    residual is ||A w - y|| when a grid measure and its matrix are given,
    otherwise the moment mismatch of the recovered ensemble.
    """
    true_locs = truth.locations_array()
    rec_locs = recovered.locations_array()
    free = list(range(len(recovered)))
    support_distance = 0.0
    weight_error = 0.0
    missed = 0
    for i in np.argsort(-np.abs(truth.weights), kind="stable"):
        c = truth.weights[i]
        if not free:
            missed += 1
            support_distance = math.pi
            weight_error = max(weight_error, abs(c))
            continue
        dist = _chordal_distance(true_locs[i][None, :], rec_locs[free])
        pick = int(np.argmin(dist))
        j = free.pop(pick)
        support_distance = max(support_distance, float(dist[pick]))
        weight_error = max(weight_error, abs(c - recovered.weights[j]))
    for j in free:
        weight_error = max(weight_error, abs(recovered.weights[j]))

    residual = 0.0
    if y is not None:
        if A is not None and measure is not None:
            residual = float(np.linalg.norm(A @ measure.weights - y.values))
        else:
            residual = float(np.linalg.norm(moments(recovered, y.degree).values - y.values))
    return RecoveryReport(
        support_distance=support_distance,
        weight_error=float(weight_error),
        residual=residual,
        iterations=stats.iterations if stats else 0,
        missed=missed,
        spurious=len(free),
        converged=stats.converged if stats else True,
    )


def l1_oracle(A: np.ndarray, y: np.ndarray, tol: float = 1e-9) -> Tuple[np.ndarray, float]:
    """
    Exact min ||w||_1 s.t. A w = y for tiny instances: some minimizer is a
    basic solution, so enumerate every column subset of size rank(A).
    """
    y = np.asarray(y, dtype=float)
    M = A.shape[1]
    if not np.any(y):
        return np.zeros(M), 0.0
    rank = np.linalg.matrix_rank(A)
    scale = max(1.0, float(np.linalg.norm(y)))
    best_w, best = None, math.inf
    for cols in combinations(range(M), rank):
        sub = A[:, cols]
        if np.linalg.matrix_rank(sub) < rank:
            continue
        coef, _, _, _ = np.linalg.lstsq(sub, y, rcond=None)
        if np.linalg.norm(sub @ coef - y) > tol * scale:
            continue
        value = float(np.abs(coef).sum())
        if value < best:
            best = value
            best_w = np.zeros(M)
            best_w[list(cols)] = coef
    if best_w is None:
        raise ValueError("Moments are not in the range of the sampling matrix")
    return best_w, best

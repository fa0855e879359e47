"""
Experiment driver: generate separated Dirac ensembles, measure their
moments, recover them by TV minimization, and certify the true support.

Usage:
    python cli.py [--config FILE] [--seed INT] [--out DIR] <subcommand> [flags]

Subcommands: gen, measure, recover, certify, kernel-scan, heatmap, pipeline, batch
"""

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from multiprocessing import Pool
from typing import List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from scipy.spatial import cKDTree

from certificate import (
    DEFAULT_NEAR_SAMPLES,
    DEFAULT_NU,
    DEFAULT_SIGMA,
    FAR_GRID_FACTOR,
    MIN_FAR_GRID,
    CertificateReport,
    IllPosedConfigurationError,
    SparsityViolationError,
    heatmap_export,
    nonneg_certificate,
    solve_certificate,
    validate_certificate,
    validate_nonneg_certificate,
)
from harmonics import DiracEnsemble, MomentVector, moments, num_coefficients, sampling_matrix
from localized_kernel import build_kernel, localization_scan, scan_profile
from recovery import (
    RecoveryReport,
    SolverOptions,
    extract_support,
    nonneg_recover,
    recovery_report,
    tv_min_recover,
)
from sphere_geometry import (
    SpherePoint,
    fibonacci_array,
    grid_spacing,
    min_separation,
    pairwise_distances,
    read_points_csv,
)

THREADS_ENV = "SPHERE_SUPERRES_THREADS"
MAX_REJECTIONS = 10 ** 6
# s caps of radius nu/(2N) must fit: s (1 - cos(nu/2N)) <= PACKING_LIMIT
PACKING_LIMIT = 1.9
PROPOSAL_BATCH = 1024
WEIGHT_LAWS = ("unit-signs", "uniform")
ON_GRID_CLUSTER_FACTOR = 0.5

logger = logging.getLogger("sphere_superres")


class ConfigError(ValueError):
    """Raised for invalid or infeasible experiment configurations."""


class RetryExhaustedError(RuntimeError):
    """Raised when rejection sampling gives up."""


@dataclass
class ExperimentConfig:
    seed: int = 0
    degree: int = 40
    num_atoms: int = 10
    separation_factor: float = DEFAULT_NU
    weight_law: str = "unit-signs"
    weight_low: float = 1.0
    weight_high: float = 2.0
    grid_size: int = 80000
    snap_to_grid: bool = True
    nonneg: bool = False
    solver: SolverOptions = field(default_factory=SolverOptions)
    support_tol: float = 1e-9
    weight_tol: float = 1e-3
    sigma: float = DEFAULT_SIGMA
    near_samples: int = DEFAULT_NEAR_SAMPLES
    nu_check: float = DEFAULT_NU
    certify_grid: int = 0  # 0 selects max(50 N^2, 20000)
    heatmap_lat_steps: int = 0
    heatmap_lon_steps: int = 0
    out_dir: str = "runs/latest"

    def validate(self):
        if self.degree < 2:
            raise ConfigError(f"degree must be at least 2, got {self.degree}")
        if self.num_atoms < 1:
            raise ConfigError(f"num_atoms must be at least 1, got {self.num_atoms}")
        if self.separation_factor < 0 or (self.separation_factor == 0 and not self.nonneg):
            raise ConfigError(f"separation_factor must be positive for signed runs, got {self.separation_factor}")
        if self.grid_size < num_coefficients(self.degree):
            raise ConfigError(f"grid_size must be at least (N+1)^2 = {num_coefficients(self.degree)}, got {self.grid_size}")
        if self.weight_law not in WEIGHT_LAWS:
            raise ConfigError(f"weight_law must be one of {WEIGHT_LAWS}, got '{self.weight_law}'")
        if self.weight_law == "uniform" and self.weight_low > self.weight_high:
            raise ConfigError("uniform weight law needs weight_low <= weight_high")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        try:
            if "solver" in data:
                data["solver"] = SolverOptions.from_dict(data["solver"])
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid config: {e}") from e

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_json(f.read())

    def save(self, path: str):
        with open(path, "w") as f:
            f.write(self.to_json())


@dataclass
class PipelineResult:
    run_dir: str
    exit_status: int
    recovery: Optional[RecoveryReport] = None
    certificate: Optional[CertificateReport] = None
    error: Optional[str] = None
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return self.exit_status == 0


def _draw_weights(cfg: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.weight_law == "uniform":
        return rng.uniform(cfg.weight_low, cfg.weight_high, cfg.num_atoms)
    if cfg.nonneg:
        return np.ones(cfg.num_atoms)
    return rng.choice([-1.0, 1.0], cfg.num_atoms)


def gen_ensemble(cfg: ExperimentConfig, grid: Optional[np.ndarray] = None) -> DiracEnsemble:
    """
    Rejection-sample cfg.num_atoms locations with pairwise separation at
    least separation_factor / N (snapped to the grid first when
    cfg.snap_to_grid), then draw weights by cfg.weight_law.

    Raises:
        ConfigError: the caps cannot be packed on the sphere
        RetryExhaustedError: more than 10^6 rejected proposals
    """
    cfg.validate()
    N, s = cfg.degree, cfg.num_atoms
    min_sep = cfg.separation_factor / N
    if s * (1 - math.cos(min_sep / 2)) > PACKING_LIMIT:
        raise ConfigError(f"{s} atoms with separation {cfg.separation_factor}/N do not fit on the sphere")

    rng = np.random.default_rng(cfg.seed)
    tree = None
    if cfg.snap_to_grid:
        grid = fibonacci_array(cfg.grid_size) if grid is None else grid
        tree = cKDTree(grid)

    accepted: List[np.ndarray] = []
    used = set()
    rejections = 0
    while len(accepted) < s:
        proposals = rng.normal(size=(PROPOSAL_BATCH, 3))
        proposals /= np.linalg.norm(proposals, axis=1, keepdims=True)
        if tree is not None:
            _, idx = tree.query(proposals)
            keys = [int(i) for i in idx]
            proposals = grid[idx]
        else:
            keys = [None] * PROPOSAL_BATCH
        for key, p in zip(keys, proposals):
            if len(accepted) == s:
                break
            ok = key not in used if key is not None else True
            if ok and accepted:
                d = pairwise_distances(p[None, :], np.array(accepted))[0]
                ok = bool(d.min() >= min_sep and d.min() > 0)
            if ok:
                accepted.append(p)
                if key is not None:
                    used.add(key)
                continue
            rejections += 1
            if rejections > MAX_REJECTIONS:
                raise RetryExhaustedError(
                    f"Gave up after {MAX_REJECTIONS} rejections with {len(accepted)}/{s} atoms placed"
                )

    weights = _draw_weights(cfg, rng)
    return DiracEnsemble([(float(w), SpherePoint.from_array(p)) for w, p in zip(weights, accepted)])


@lru_cache(maxsize=1)
def sampling_setup(grid_size: int, degree: int):
    """
    Fibonacci grid and its sampling matrix, built once per process and
    shared by every run with the same grid size and degree (read-only).
    """
    grid = fibonacci_array(grid_size)
    A = sampling_matrix(grid, degree)
    grid.setflags(write=False)
    A.setflags(write=False)
    return grid, A


def _write_json(path: str, data: dict):
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def _attach_run_log(run_dir: str) -> logging.Handler:
    handler = logging.FileHandler(os.path.join(run_dir, "run.log"), mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    return handler


def _certify_truth(cfg: ExperimentConfig, truth: DiracEnsemble, run_dir: str, verbose: bool) -> dict:
    N = cfg.degree
    far = cfg.certify_grid or max(FAR_GRID_FACTOR * N * N, MIN_FAR_GRID)
    sep = min_separation(truth.locations) if len(truth) >= 2 else math.pi
    extra = {"min_separation": sep, "admissible": bool(sep >= cfg.nu_check / N)}
    try:
        if cfg.nonneg:
            cert = nonneg_certificate(truth.locations, N)
            report = validate_nonneg_certificate(cert, far, cfg.sigma / N)
        else:
            cert, _ = solve_certificate(truth.locations, np.sign(truth.weights), build_kernel(N), verbose=verbose)
            report = validate_certificate(cert, far, cfg.sigma / N, cfg.near_samples, verbose=verbose)
    except (IllPosedConfigurationError, SparsityViolationError) as e:
        logger.warning("certificate failed: %s", e)
        if verbose:
            print(f"❌ Certificate failed: {e}")
        return {"error": str(e), "passed": False, **extra}

    if cfg.heatmap_lat_steps > 0 and cfg.heatmap_lon_steps > 0:
        heatmap_export(cert, cfg.heatmap_lat_steps, cfg.heatmap_lon_steps, os.path.join(run_dir, "heatmap.csv"))
    logger.info("certificate: off_support_max=%.6f hessian_ok=%s", report.off_support_max, report.hessian_ok)
    return {**json.loads(report.to_json()), **extra}


def run_pipeline(cfg: ExperimentConfig, verbose: bool = False) -> PipelineResult:
    """
    gen -> moments -> recover -> extract_support -> report, plus the
    certificate of the true support. Every artifact lands in cfg.out_dir;
    timestamps go to run.log only. Exit status 0 iff recovery passes the
    configured tolerances.
    """
    run_dir = cfg.out_dir
    os.makedirs(run_dir, exist_ok=True)
    handler = _attach_run_log(run_dir)
    start = time.time()
    try:
        cfg.validate()
        cfg.save(os.path.join(run_dir, "config.json"))
        logger.info("run started: seed=%d N=%d s=%d nu=%.3f", cfg.seed, cfg.degree, cfg.num_atoms, cfg.separation_factor)
        if verbose:
            print(f"🚀 Pipeline: N={cfg.degree}, s={cfg.num_atoms}, nu={cfg.separation_factor}, seed={cfg.seed}")

        grid, A = sampling_setup(cfg.grid_size, cfg.degree)
        truth = gen_ensemble(cfg, grid)
        truth.to_csv(os.path.join(run_dir, "ensemble.csv"))
        logger.info("generated %d atoms", len(truth))

        y = moments(truth, cfg.degree)
        y.save(os.path.join(run_dir, "moments.json"))

        recover = nonneg_recover if cfg.nonneg else tv_min_recover
        measure, stats = recover(y, grid, cfg.degree, cfg.solver, A=A, verbose=verbose)
        logger.info("solver: iterations=%d residual=%.3e converged=%s", stats.iterations, stats.residual, stats.converged)

        # snapped atoms may sit on neighbouring grid points; keep them apart
        radius = ON_GRID_CLUSTER_FACTOR * grid_spacing(cfg.grid_size) if cfg.snap_to_grid else None
        recovered = extract_support(measure, cluster_radius=radius)
        recovered.to_csv(os.path.join(run_dir, "recovered.csv"))
        rec_report = recovery_report(truth, recovered, y, A, measure, stats)
        passed = rec_report.passed(cfg.support_tol, cfg.weight_tol)
        _write_json(os.path.join(run_dir, "recovery_report.json"), {**rec_report.to_dict(), "passed": passed})
        logger.info("recovery: support_distance=%.3e weight_error=%.3e passed=%s",
                    rec_report.support_distance, rec_report.weight_error, passed)

        cert_data = _certify_truth(cfg, truth, run_dir, verbose)
        _write_json(os.path.join(run_dir, "certificate_report.json"), cert_data)
        cert_report = None
        if "error" not in cert_data:
            cert_report = CertificateReport(
                interp_error=cert_data["interp_error"],
                grad_norm=cert_data["grad_norm"],
                off_support_max=cert_data["off_support_max"],
                hessian_ok=cert_data["hessian_ok"],
                far_field_max=cert_data["far_field_max"],
                near_field_max=cert_data["near_field_max"],
            )

        elapsed = time.time() - start
        logger.info("run finished in %.2fs", elapsed)
        if verbose:
            status = "✅" if passed else "❌"
            print(f"{status} Recovery: support distance {rec_report.support_distance:.3e}, "
                  f"weight error {rec_report.weight_error:.3e} ({elapsed:.1f}s)")
        return PipelineResult(run_dir, 0 if passed else 1, rec_report, cert_report, elapsed=elapsed)
    except (ValueError, RuntimeError) as e:
        logger.error("run failed: %s", e)
        _write_json(os.path.join(run_dir, "error.json"), {"error": str(e), "type": type(e).__name__})
        if verbose:
            print(f"❌ Pipeline failed: {e}")
        return PipelineResult(run_dir, 1, error=str(e), elapsed=time.time() - start)
    finally:
        logger.removeHandler(handler)
        handler.close()


def _run_seed(cfg_dict: dict) -> PipelineResult:
    return run_pipeline(ExperimentConfig.from_dict(cfg_dict))


def worker_count(requested: Optional[int] = None) -> int:
    """Worker processes for batch runs, capped by SPHERE_SUPERRES_THREADS"""
    count = requested or os.cpu_count() or 1
    cap = os.getenv(THREADS_ENV)
    if cap:
        try:
            count = min(count, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got '{cap}'")
    return max(1, count)


def run_batch(cfg: ExperimentConfig, runs: int, workers: Optional[int] = None) -> List[PipelineResult]:
    """Independent seeds cfg.seed .. cfg.seed + runs - 1, one directory each"""
    configs = []
    for i in range(runs):
        run_cfg = ExperimentConfig.from_dict(cfg.to_dict())
        run_cfg.seed = cfg.seed + i
        run_cfg.out_dir = os.path.join(cfg.out_dir, f"seed_{run_cfg.seed:06d}")
        configs.append(run_cfg.to_dict())

    print(f"🚀 Starting batch of {runs} runs\n")
    processes = worker_count(workers)
    if processes == 1:
        results = [_run_seed(c) for c in configs]
    else:
        with Pool(processes) as pool:
            results = pool.map(_run_seed, configs)
    for c, r in zip(configs, results):
        status = "✅" if r.passed else "❌"
        detail = r.error or f"support {r.recovery.support_distance:.2e}, weight {r.recovery.weight_error:.2e}"
        print(f"{status} seed {c['seed']}: {detail} ({r.elapsed:.1f}s)")
    print(f"\n✅ Batch complete! {sum(r.passed for r in results)}/{runs} runs passed.")
    _batch_report(configs, results)
    return results


def _spread(values: Sequence[float]) -> str:
    if len(values) >= 2:
        return f"{statistics.mean(values):.3e} (σ={statistics.stdev(values):.3e})"
    return f"{statistics.mean(values):.3e}"


def _batch_report(configs: List[dict], results: List[PipelineResult]):
    print("\n" + "=" * 80)
    print("📊 BATCH REPORT")
    print("=" * 80)
    finished = [(c, r) for c, r in zip(configs, results) if r.recovery is not None]
    if not finished:
        print("No run produced a recovery report.")
        return

    print("\n📈 RECOVERY STATISTICS")
    print("-" * 60)
    print(f"Support distance:  {_spread([r.recovery.support_distance for _, r in finished])}")
    print(f"Weight error:      {_spread([r.recovery.weight_error for _, r in finished])}")
    print(f"Residual:          {_spread([r.recovery.residual for _, r in finished])}")
    print(f"Iterations:        {statistics.mean([r.recovery.iterations for _, r in finished]):.0f}")
    print(f"Run time:          {statistics.mean([r.elapsed for _, r in finished]):.2f}s")
    print(f"Pass rate:         {sum(r.passed for r in results) / len(results):.0%}")

    certified = [r.certificate for _, r in finished if r.certificate is not None]
    if certified:
        print("\n🧮 CERTIFICATE STATISTICS")
        print("-" * 60)
        print(f"Off-support max:   {_spread([c.off_support_max for c in certified])}")
        print(f"Hessian test:      {sum(c.hessian_ok for c in certified)}/{len(certified)} passed")

    print("\n📉 WORST RUNS")
    print("-" * 60)
    worst = sorted(finished, key=lambda cr: cr[1].recovery.weight_error, reverse=True)[:3]
    for c, r in worst:
        print(f"seed {c['seed']:<8} weight error {r.recovery.weight_error:.3e}  "
              f"support distance {r.recovery.support_distance:.3e}  ({r.run_dir})")


def _read_nodes(path: str):
    points, extra = read_points_csv(path)
    signs = np.array([row[0] if row else 1.0 for row in extra], dtype=float)
    return points, signs


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {
        "seed": args.seed,
        "out_dir": args.out,
        "degree": getattr(args, "degree", None),
        "num_atoms": getattr(args, "num_atoms", None),
        "separation_factor": getattr(args, "nu", None),
        "weight_law": getattr(args, "weight_law", None),
        "grid_size": getattr(args, "grid_size", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "nonneg", False):
        cfg.nonneg = True
    if getattr(args, "no_snap", False):
        cfg.snap_to_grid = False
    if getattr(args, "max_iters", None) is not None:
        cfg.solver.max_iters = args.max_iters
    if getattr(args, "tol", None) is not None:
        cfg.solver.primal_tol = args.tol
    return cfg.validate()


def cmd_gen(args) -> int:
    cfg = _config_from_args(args)
    truth = gen_ensemble(cfg)
    path = args.output or os.path.join(cfg.out_dir, "ensemble.csv")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    truth.to_csv(path)
    print(f"✅ Wrote {len(truth)} atoms (min separation {min_separation(truth.locations) if len(truth) > 1 else math.pi:.4f}) to {path}")
    return 0


def cmd_measure(args) -> int:
    truth = DiracEnsemble.from_csv(args.ensemble)
    y = moments(truth, args.degree)
    y.save(args.output)
    print(f"✅ Wrote {y.values.size} moments of degree {args.degree} to {args.output}")
    return 0


def cmd_recover(args) -> int:
    y = MomentVector.load(args.moments)
    opts = SolverOptions(nonneg=args.nonneg)
    if args.max_iters is not None:
        opts.max_iters = args.max_iters
    if args.tol is not None:
        opts.primal_tol = args.tol
    N = args.degree if args.degree is not None else y.degree
    grid, A = sampling_setup(args.grid_size, N)
    recover = nonneg_recover if args.nonneg else tv_min_recover
    measure, stats = recover(y, grid, N, opts, A=A, verbose=True)
    recovered = extract_support(measure)
    recovered.to_csv(args.out_csv)
    print(f"✅ Recovered {len(recovered)} atoms in {stats.iterations} iterations -> {args.out_csv}")
    if args.report:
        residual = float(np.linalg.norm(A @ measure.weights - y.values))
        _write_json(args.report, {"atoms": len(recovered), "converged": stats.converged,
                                  "iterations": stats.iterations, "residual": residual,
                                  "objective": stats.objective})
    return 0 if stats.converged else 1


def cmd_certify(args) -> int:
    nodes, signs = _read_nodes(args.nodes)
    N = args.degree
    if len(nodes) >= 2:
        sep = min_separation(nodes)
        if sep < args.nu_check / N:
            print(f"⚠️  Nodes are closer than {args.nu_check}/N (min separation {sep:.4f})")
    try:
        cert, _ = solve_certificate(nodes, signs, build_kernel(N), verbose=True)
    except IllPosedConfigurationError as e:
        print(f"❌ {e}")
        if args.report:
            _write_json(args.report, {"error": str(e), "passed": False})
        return 1
    report = validate_certificate(cert, args.grid, args.sigma / N, verbose=True)
    if args.report:
        _write_json(args.report, json.loads(report.to_json()))
    if args.heatmap:
        heatmap_export(cert, args.lat_steps, args.lon_steps, args.heatmap)
    print(f"{'✅' if report.passed else '❌'} off-support max {report.off_support_max:.6f}, "
          f"interpolation error {report.interp_error:.2e}")
    return 0 if report.passed else 1


def cmd_kernel_scan(args) -> int:
    table = build_kernel(args.degree)
    theta, value, envelope = scan_profile(table, args.k, args.order)
    with open(args.output, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["theta", "value", "envelope"])
        for row in zip(theta, value, envelope):
            writer.writerow([repr(float(v)) for v in row])
    c = localization_scan(table, args.k, args.order)
    print(f"✅ N={args.degree}, l={args.order}, k={args.k}: fitted constant {c:.6f} -> {args.output}")
    return 0


def cmd_heatmap(args) -> int:
    nodes, signs = _read_nodes(args.nodes)
    if args.nonneg:
        cert = nonneg_certificate(nodes, args.degree)
    else:
        cert, _ = solve_certificate(nodes, signs, build_kernel(args.degree))
    rows = heatmap_export(cert, args.lat_steps, args.lon_steps, args.output)
    print(f"✅ Wrote {len(rows)} heatmap samples to {args.output}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config_from_args(args)
    return run_pipeline(cfg, verbose=True).exit_status


def cmd_batch(args) -> int:
    cfg = _config_from_args(args)
    results = run_batch(cfg, args.runs, args.workers)
    return 0 if all(r.passed for r in results) else 1


def _add_experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--degree", type=int, help="Band limit N")
    p.add_argument("--num-atoms", type=int, dest="num_atoms", help="Number of atoms s")
    p.add_argument("--nu", type=float, help="Separation factor: atoms at least nu/N apart")
    p.add_argument("--weight-law", choices=WEIGHT_LAWS, dest="weight_law")
    p.add_argument("--grid-size", type=int, dest="grid_size", help="Fibonacci grid size")
    p.add_argument("--nonneg", action="store_true", help="Non-negative weights and solver")
    p.add_argument("--no-snap", action="store_true", dest="no_snap", help="Keep atoms off the grid")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Super-resolution of Dirac ensembles on the sphere")
    parser.add_argument("--config", help="ExperimentConfig JSON file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="Output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="Generate a separated Dirac ensemble")
    _add_experiment_flags(p)
    p.add_argument("--output", help="Ensemble CSV (default: <out>/ensemble.csv)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("measure", help="Moments of an ensemble")
    p.add_argument("--ensemble", required=True, help="CSV x,y,z,weight")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--output", required=True, help="Moments JSON")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("recover", help="TV-min recovery from moments")
    p.add_argument("--moments", required=True, help="Moments JSON")
    p.add_argument("--grid-size", type=int, required=True, dest="grid_size")
    p.add_argument("--degree", type=int)
    p.add_argument("--nonneg", action="store_true")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--tol", type=float)
    p.add_argument("--out", dest="out_csv", required=True, help="Recovered ensemble CSV")
    p.add_argument("--report", help="Solver report JSON")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("certify", help="Solve and validate the dual certificate")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--nodes", required=True, help="CSV x,y,z[,sign]")
    p.add_argument("--nu-check", type=float, default=DEFAULT_NU, dest="nu_check")
    p.add_argument("--grid", type=int, help="Far-field grid size")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    p.add_argument("--report", help="Certificate report JSON")
    p.add_argument("--heatmap", help="Heatmap CSV lat,lon,q")
    p.add_argument("--lat-steps", type=int, default=181, dest="lat_steps")
    p.add_argument("--lon-steps", type=int, default=360, dest="lon_steps")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("kernel-scan", help="Localization profile of F_N")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--order", type=int, default=0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--output", required=True, help="CSV theta,value,envelope")
    p.set_defaults(func=cmd_kernel_scan)

    p = sub.add_parser("heatmap", help="Certificate values on a lat/lon grid")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--nodes", required=True, help="CSV x,y,z[,sign]")
    p.add_argument("--nonneg", action="store_true", help="Use the product certificate")
    p.add_argument("--lat-steps", type=int, default=181, dest="lat_steps")
    p.add_argument("--lon-steps", type=int, default=360, dest="lon_steps")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("pipeline", help="Generate, measure, recover and certify")
    _add_experiment_flags(p)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("batch", help="Run the pipeline over consecutive seeds")
    _add_experiment_flags(p)
    p.add_argument("--runs", type=int, default=8)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RetryExhaustedError, ValueError, RuntimeError) as e:
        print(f"❌ {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

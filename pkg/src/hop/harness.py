"""Paired online-vs-benchmark experiments, seed sweeps and scaling fits."""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from hop.kalman_bench import h_step_benchmark, run_filter
from hop.learner import EpochSchedule, TrajectoryStream, run_hop
from hop.lin_core import estimate_unit_jordan_order, solve_dare
from hop.system_sim import PRESETS, simulate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "marginally_stable"
    H: int = 2
    beta: float = 2.0
    lam: float = 1.0
    T_init: int = 400
    N_E: int = 3
    seeds: tuple = tuple(range(20))
    kappa: int | None = None
    horizons: tuple = ()
    systems: tuple = ()
    custom: dict | None = field(default=None, compare=True)

    def __post_init__(self):
        if self.H < 1 or self.T_init < 1 or self.N_E < 1:
            raise ValueError("H, T_init and N_E must be positive")
        if self.beta <= 0 or self.lam <= 0:
            raise ValueError("beta and lam must be positive")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.kappa is not None and self.kappa < 0:
            raise ValueError("kappa must be nonnegative")

    @property
    def N(self):
        return 2 ** self.N_E * self.T_init

    def schedule(self, H=None):
        return EpochSchedule(T_init=self.T_init, N_E=self.N_E, beta=self.beta,
                             H=self.H if H is None else H)

    def checkpoints(self):
        return [self.T_init * 2 ** j for j in range(1, self.N_E + 1)]


def resolve_system(name, custom=None):
    from hop.system_sim import LtiSystem

    if name == "custom":
        if not custom:
            raise ValueError("custom system requires matrices A, B, C, Q, R")
        return LtiSystem(**{k: custom[k] for k in "ABCQR"}, name="custom")
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown system {name!r}") from None


@dataclass(frozen=True)
class RegretSeries:
    """Per-step losses indexed by base time ``k`` (forecast of ``y_{k+H}``)."""

    k: np.ndarray
    epoch: np.ndarray
    p: np.ndarray
    loss_online: np.ndarray
    loss_benchmark: np.ndarray
    seed: int = 0
    H: int = 1
    checksum: str = ""

    @property
    def cum_regret(self):
        return np.cumsum(self.loss_online - self.loss_benchmark)

    def regret_at(self, N):
        """``R_N``: excess loss summed over bases ``k <= N``."""
        idx = np.searchsorted(self.k, N, side="right")
        return float(np.sum(self.loss_online[:idx] - self.loss_benchmark[:idx]))

    @property
    def final_regret(self):
        return float(self.cum_regret[-1]) if self.k.size else 0.0


def _paired(sys, config, seed, H):
    sched = config.schedule(H)
    N = sched.horizon_end
    traj = simulate(sys, N + H, H=H, seed=seed)
    sol = solve_dare(sys.A, sys.C, sys.Q, sys.R)
    bench = h_step_benchmark(sys, sol, run_filter(sys, sol, traj), traj, H)
    stream = TrajectoryStream.from_trajectory(traj)
    plog, _ = run_hop(stream, sched, lam=config.lam)
    return traj, bench, plog


def paired_run(sys, config, seed, H=None):
    """Simulate once and score HOP against the H-step Kalman forecast on it.

    Both predictors see the same realisation; the learner only through a
    :class:`TrajectoryStream`, the benchmark with full model knowledge.
    """
    H = config.H if H is None else H
    traj, bench, plog = _paired(sys, config, seed, H)
    y_true = traj.outputs[plog.targets]
    loss_online = np.sum((y_true - plog.predictions) ** 2, axis=1)
    loss_bench = np.sum(bench.h_step_innovations[plog.base] ** 2, axis=1)
    if not (np.all(np.isfinite(loss_online)) and np.all(np.isfinite(loss_bench))):
        raise FloatingPointError("non-finite loss encountered")
    return RegretSeries(k=plog.base, epoch=plog.epoch, p=plog.p, loss_online=loss_online,
                        loss_benchmark=loss_bench, seed=seed, H=H, checksum=traj.checksum())


def paired_trace(sys, config, seed, path, H=None):
    """Write raw forecasts ``k,target,yhat_*,ybar_*,y_*`` for one seed."""
    H = config.H if H is None else H
    traj, bench, plog = _paired(sys, config, seed, H)
    m = traj.outputs.shape[1]
    cols = ([f"yhat{i}" for i in range(m)] + [f"ybar{i}" for i in range(m)]
            + [f"y{i}" for i in range(m)])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["k", "target"] + cols) + "\n")
        for j, k in enumerate(plog.base):
            vals = np.concatenate([plog.predictions[j], bench.h_step_predictions[k],
                                   traj.outputs[k + H]])
            fh.write(",".join([str(int(k)), str(int(k + H))] + [repr(float(v)) for v in vals]) + "\n")


def benchmark_self_regret(sys, config, seed, H=None):
    """Benchmark scored against itself: zero regret by construction."""
    H = config.H if H is None else H
    N = config.schedule(H).horizon_end
    traj = simulate(sys, N + H, H=H, seed=seed)
    sol = solve_dare(sys.A, sys.C, sys.Q, sys.R)
    bench = h_step_benchmark(sys, sol, run_filter(sys, sol, traj), traj, H)
    k = np.arange(config.T_init + 1, N + 1)
    loss = np.sum(bench.h_step_innovations[k] ** 2, axis=1)
    return RegretSeries(k=k, epoch=np.zeros_like(k), p=np.zeros_like(k), loss_online=loss,
                        loss_benchmark=loss.copy(), seed=seed, H=H, checksum=traj.checksum())


def worker_count():
    env = os.environ.get("HOP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring malformed HOP_THREADS=%r", env)
    return max(1, min(os.cpu_count() or 1, 8))


def _paired_job(args):
    sys, config, seed, H = args
    return paired_run(sys, config, seed, H)


@dataclass(frozen=True)
class SweepResult:
    runs: list          # RegretSeries sorted by seed
    N_grid: np.ndarray  # checkpoint N values
    per_seed: np.ndarray  # (n_seeds, len(N_grid)) regret at checkpoints
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    H: int

    @property
    def final_median(self):
        return float(self.median[-1])

    def median_trace(self):
        """Pointwise median of the cumulative regret over seeds, by base time."""
        return np.median(np.vstack([r.cum_regret for r in self.runs]), axis=0)


def seed_sweep(sys, config, H=None, workers=None):
    """Run every seed of ``config`` (in parallel) and summarise at checkpoints."""
    H = config.H if H is None else H
    seeds = sorted(set(config.seeds))
    jobs = [(sys, config, s, H) for s in seeds]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            runs = list(pool.map(_paired_job, jobs))
    else:
        runs = [_paired_job(j) for j in jobs]
    runs.sort(key=lambda r: r.seed)
    grid = np.asarray(config.checkpoints())
    per_seed = np.array([[r.regret_at(N) for N in grid] for r in runs])
    q25, med, q75 = np.percentile(per_seed, [25, 50, 75], axis=0)
    return SweepResult(runs=runs, N_grid=grid, per_seed=per_seed, median=med,
                       q25=q25, q75=q75, H=H)


@dataclass(frozen=True)
class ScalingFit:
    horizons: np.ndarray
    regrets: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    max_ratio: float


def _linfit(x, y):
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return float(coef[0]), float(coef[1]), min(max(r2, 0.0), 1.0), rss


def fit_h_scaling(horizons, regrets):
    """Least-squares slope of ``log R`` against ``log H``."""
    H = np.asarray(horizons, dtype=float)
    R = np.asarray(regrets, dtype=float)
    if H.size < 3:
        raise ValueError("need at least three horizons")
    keep = R > 0
    if not np.all(keep):
        log.warning("dropping %d horizon(s) with nonpositive regret", int(np.sum(~keep)))
        H, R = H[keep], R[keep]
    if H.size < 2:
        raise ValueError("fewer than two horizons with positive regret")
    intercept, slope, r2, _ = _linfit(np.log(H), np.log(R))
    order = np.argsort(H)
    return ScalingFit(horizons=H, regrets=R, slope=slope, intercept=intercept, r_squared=r2,
                      max_ratio=float(R[order[-1]] / R[order[0]]))


@dataclass(frozen=True)
class LogFit:
    intercept: float
    slope: float
    r_squared: float
    rss: float
    linear_rss: float

    @property
    def log_beats_linear(self):
        return self.rss <= self.linear_rss


def fit_logN(N, R, min_points=4):
    """Fit ``R_N = a + b log N`` and, for comparison, ``R_N = a + b N``."""
    N = np.asarray(N, dtype=float)
    R = np.asarray(R, dtype=float)
    if N.size < min_points:
        raise ValueError(f"need at least {min_points} checkpoints")
    if N.max() / N.min() < 4:
        raise ValueError("checkpoints must span at least two doublings")
    a, b, r2, rss = _linfit(np.log(N), R)
    _, _, _, lin_rss = _linfit(N, R)
    return LogFit(intercept=a, slope=b, r_squared=r2, rss=rss, linear_rss=lin_rss)


def theoretical_beta(sol, kappa, H, c=1.0):
    """``c (kappa + ln H) / ln(1/rho(A-LC))``."""
    rho = sol.closed_loop_radius if hasattr(sol, "closed_loop_radius") else float(sol)
    if not rho < 1.0:
        raise ValueError("closed loop must be stable (rho(A-LC) < 1)")
    if rho == 0.0:
        return 0.0
    return c * (kappa + math.log(H)) / math.log(1.0 / rho)


def system_kappa(sys, override=None):
    return estimate_unit_jordan_order(sys.A) if override is None else override

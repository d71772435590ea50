"""Numerical identity checks run by ``hop validate``."""

import math
from dataclasses import dataclass

import numpy as np

from hop import kalman_bench as kb
from hop.learner import batch_solve, build_window, history_samples, recursive_step
from hop.lin_core import solve_dare
from hop.system_sim import marginally_stable_system, scalar_system, simulate


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tol: float
    passed: bool

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<44s} measured={self.value:.3e}  tol={self.tol:.1e}"


def _le(name, value, tol):
    return Check(name, float(value), tol, bool(value <= tol))


def dare_checks(sys_list):
    out = []
    for s in sys_list:
        sol = solve_dare(s.A, s.C, s.Q, s.R)
        out.append(_le(f"dare residual [{s.name}]", sol.residual, 1e-10))
        out.append(_le(f"dare closed-loop radius < 1 [{s.name}]", sol.closed_loop_radius, 1.0 - 1e-12))
    return out


def regression_identity(sys, K=2000, horizons=(1, 2, 6), p=12, seed=0):
    sol = solve_dare(sys.A, sys.C, sys.Q, sys.R)
    out = []
    for H in horizons:
        traj = simulate(sys, K, H=H, seed=seed)
        filt = kb.run_filter(sys, sol, traj)
        bench = kb.h_step_benchmark(sys, sol, filt, traj, H)
        out.append(_le(f"regression identity H={H} [{sys.name}]",
                       kb.regression_residual(sys, sol, filt, bench, traj, p), 1e-6))
    return out


def innovation_identity(sys, K=2000, horizons=(1, 2, 6), seed=0):
    sol = solve_dare(sys.A, sys.C, sys.Q, sys.R)
    out = []
    for H in horizons:
        traj = simulate(sys, K, H=H, seed=seed)
        filt = kb.run_filter(sys, sol, traj)
        bench = kb.h_step_benchmark(sys, sol, filt, traj, H)
        tol = 0.0 if H == 1 else 1e-8
        out.append(_le(f"innovation decomposition H={H} [{sys.name}]",
                       kb.innovation_decomposition_check(filt, bench, sys, sol), tol))
    return out


def h_step_covariance_error(sys, H, K=100_000, seed=0):
    """Relative Frobenius error of the empirical H-step innovation covariance."""
    sol = solve_dare(sys.A, sys.C, sys.Q, sys.R)
    traj = simulate(sys, K, H=H, seed=seed)
    filt = kb.run_filter(sys, sol, traj)
    bench = kb.h_step_benchmark(sys, sol, filt, traj, H)
    r = bench.h_step_innovations
    emp = r.T @ r / r.shape[0]
    theo = sys.C @ bench.error_covariance_PH @ sys.C.T + sys.R
    return float(np.linalg.norm(emp - theo) / np.linalg.norm(theo))


def covariance_checks(sys, horizons=(2, 4), K=100_000, seed=0):
    return [_le(f"H-step covariance H={H} [{sys.name}]",
                h_step_covariance_error(sys, H, K, seed), 0.10) for H in horizons]


def batch_recursive_gap(sys, H=2, p=12, t_batch=500, steps=1000, lam=1.0, seed=0):
    """Relative Frobenius gap between recursive and batch ridge weights."""
    traj = simulate(sys, t_batch + steps + H + 1, H=H, seed=seed)
    y, u = traj.outputs, traj.inputs
    state = batch_solve(*history_samples(y, u, p, H, t_batch), lam, p, H)
    for t in range(t_batch + 1, t_batch + steps + 1):
        recursive_step(state, y[t + H], t + H, build_window(y, u, t, p, H))
    ref = batch_solve(*history_samples(y, u, p, H, t_batch + steps), lam, p, H)
    return float(np.linalg.norm(state.weights - ref.weights) / np.linalg.norm(ref.weights))


def one_step_reduction(sys, p=8):
    sol = solve_dare(sys.A, sys.C, sys.Q, sys.R)
    a = kb.optimal_weights(sys, sol, p, 1)
    b = kb.one_step_weights(sys, sol, p)
    same = np.array_equal(a.G1, b.G1) and np.array_equal(a.G2, b.G2)
    return Check(f"H=1 reduction (bitwise) [{sys.name}]", 0.0 if same else math.inf, 0.0, same)


def run_all(fast=False):
    """Run every identity check; ``fast`` restricts to the scalar plant."""
    golden = scalar_system()
    # the scalar plant needs an input channel for the regression checks
    golden_u = scalar_system(b=1.0)
    systems = [golden_u] if fast else [golden_u, marginally_stable_system()]
    checks = dare_checks([golden] + systems[1:])
    for s in systems:
        checks += regression_identity(s)
        checks += innovation_identity(s)
        checks += covariance_checks(s, K=20_000 if fast else 100_000)
        checks.append(_le(f"batch = recursive [{s.name}]", batch_recursive_gap(s), 1e-6))
        checks.append(one_step_reduction(s))
    return checks

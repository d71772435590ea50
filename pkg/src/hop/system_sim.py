"""Seeded simulation of the plant

    x[k+1] = A x[k] + B u[k] + w[k],   w ~ N(0, Q)
    y[k]   = C x[k] + v[k],            v ~ N(0, R)

with exogenous inputs u[k] ~ N(0, I).
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from hop.lin_core import MatrixDims, is_positive_definite, spectral_radius

# child indices of the master SeedSequence; fixed so that horizon changes
# never shift the noise realisation
PROCESS_STREAM, MEASUREMENT_STREAM, INPUT_STREAM = 0, 1, 2


@dataclass(frozen=True)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    name: str = "custom"
    dims: MatrixDims = field(init=False)

    def __post_init__(self):
        A, B, C, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in
                         (self.A, self.B, self.C, self.Q, self.R))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        m = C.shape[0]
        if Q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n}, got {Q.shape}")
        if R.shape != (m, m):
            raise ValueError(f"R must be {m}x{m}, got {R.shape}")
        if not is_positive_definite(Q):
            raise ValueError("Q must be symmetric positive definite")
        if not is_positive_definite(R):
            raise ValueError("R must be symmetric positive definite")
        if spectral_radius(A) > 1.0 + 1e-9:
            raise ValueError("A must be marginally stable (spectral radius <= 1)")
        for name, M in zip("ABCQR", (A, B, C, Q, R)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        object.__setattr__(self, "dims", MatrixDims(n=n, m=m, n_u=B.shape[1]))


def marginally_stable_system():
    """Three-state benchmark plant with a double unit eigenvalue."""
    A = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.5], [0.0, 0.0, 0.9]]
    return LtiSystem(A=A, B=[[0.0], [0.0], [1.0]], C=[[1.0, 0.0, 0.0]],
                     Q=0.01 * np.eye(3), R=[[0.01]], name="marginally_stable")


def stable_system():
    """Open-loop stable variant (all eigenvalues 0.6), same B, C, Q, R."""
    A = [[0.6, 0.5, 0.0], [0.0, 0.6, 0.5], [0.0, 0.0, 0.6]]
    return LtiSystem(A=A, B=[[0.0], [0.0], [1.0]], C=[[1.0, 0.0, 0.0]],
                     Q=0.01 * np.eye(3), R=[[0.01]], name="stable")


def scalar_system(a=1.0, b=0.0, c=1.0, q=1.0, r=1.0):
    return LtiSystem(A=[[a]], B=[[b]], C=[[c]], Q=[[q]], R=[[r]], name="scalar")


PRESETS = {
    "marginally_stable": marginally_stable_system,
    "stable": stable_system,
    "scalar": scalar_system,
}


@dataclass(frozen=True)
class Trajectory:
    """One realisation. ``states``/``outputs`` cover k = 0..K and ``inputs``
    cover k = 0..K+H-1, so future inputs are available for every base time."""

    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    seed: int
    horizon_lead: int

    @property
    def K(self):
        return self.outputs.shape[0] - 1

    def checksum(self):
        h = hashlib.sha256()
        for arr in (self.states, self.inputs, self.outputs):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()


def _child_seeds(seed):
    return np.random.SeedSequence(seed).spawn(3)


def noise_stream(seed, dim, count):
    """``count`` i.i.d. standard normal ``dim``-vectors, shape (count, dim).

    ``seed`` may be an int or a ``SeedSequence``. Draws are prefix-stable: a
    longer request extends a shorter one with the same seed.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.standard_normal((count, dim))


def simulate(sys, K, H=1, seed=0, x0=None):
    """Simulate ``K`` steps of ``sys``; inputs are drawn H-1 steps past ``y_K``.

    Raises:
        ValueError: on bad lengths.
        FloatingPointError: if the state leaves the finite range.
    """
    if K < 1 or H < 1:
        raise ValueError("K and H must be >= 1")
    n, m, n_u = sys.dims.n, sys.dims.m, sys.dims.n_u
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")

    ss_w, ss_v, ss_u = _child_seeds(seed)
    w = noise_stream(ss_w, n, K) @ np.linalg.cholesky(sys.Q).T
    v = noise_stream(ss_v, m, K + 1) @ np.linalg.cholesky(sys.R).T
    u = noise_stream(ss_u, n_u, K + H)

    A, B = sys.A, sys.B
    states = np.empty((K + 1, n))
    states[0] = x
    drive = u[:K] @ B.T + w
    for k in range(K):
        x = A @ x + drive[k]
        states[k + 1] = x
    if not np.all(np.isfinite(states)):
        raise FloatingPointError("state trajectory diverged to non-finite values")
    outputs = states @ sys.C.T + v
    return Trajectory(states=states, inputs=u, outputs=outputs, seed=seed, horizon_lead=H)


def noiseless_trajectory(sys, K, H=1, x0=None, inputs=None):
    """Deterministic companion of :func:`simulate` (zero noise, given inputs)."""
    n, n_u = sys.dims.n, sys.dims.n_u
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    u = np.zeros((K + H, n_u)) if inputs is None else np.asarray(inputs, dtype=float).reshape(K + H, n_u)
    states = np.empty((K + 1, n))
    states[0] = x
    for k in range(K):
        x = sys.A @ x + sys.B @ u[k]
        states[k + 1] = x
    return Trajectory(states=states, inputs=u, outputs=states @ sys.C.T, seed=-1, horizon_lead=H)


def output_variance(sys, k):
    """Closed-form Var(y_k) for x_0 = 0 under unit-variance inputs."""
    drive = sys.Q + sys.B @ sys.B.T
    cov = np.zeros((sys.dims.n, sys.dims.n))
    Al = np.eye(sys.dims.n)
    for _ in range(k):
        cov += Al @ drive @ Al.T
        Al = sys.A @ Al
    return sys.C @ cov @ sys.C.T + sys.R


def write_trajectory_csv(traj, path):
    """Columns: k, u_0..u_{n_u-1}, y_0..y_{m-1} (outputs blank past K)."""
    n_u = traj.inputs.shape[1]
    m = traj.outputs.shape[1]
    header = ["k"] + [f"u{i}" for i in range(n_u)] + [f"y{i}" for i in range(m)]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(traj.inputs.shape[0]):
            row = [str(k)] + [repr(float(v)) for v in traj.inputs[k]]
            if k <= traj.K:
                row += [repr(float(v)) for v in traj.outputs[k]]
            else:
                row += [""] * m
            fh.write(",".join(row) + "\n")

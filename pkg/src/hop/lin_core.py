"""Small linear-algebra toolkit: spectral radius, steady-state Riccati solver,
definiteness checks and Jordan-order estimation at eigenvalue one."""

from dataclasses import dataclass

import numpy as np


class ConvergenceError(RuntimeError):
    """Raised when the Riccati iteration fails to settle within ``max_iter``."""


@dataclass(frozen=True)
class MatrixDims:
    n: int
    m: int
    n_u: int

    def __post_init__(self):
        for name in ("n", "m", "n_u"):
            if getattr(self, name) < 1:
                raise ValueError(f"dimension {name} must be >= 1")


@dataclass(frozen=True)
class RiccatiSolution:
    """Steady-state filter quantities.

    Attributes:
        P: state prediction-error covariance (n x n).
        L: steady-state predictor gain (n x m).
        closed_loop_radius: spectral radius of ``A - L C``.
        residual: Frobenius norm of the Riccati defect at ``P``.
        iterations: number of fixed-point sweeps used.
    """

    P: np.ndarray
    L: np.ndarray
    closed_loop_radius: float
    residual: float
    iterations: int = 0


def _as_square(M, name="matrix"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def spectral_radius(M):
    """Largest eigenvalue modulus of a square matrix."""
    M = _as_square(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def is_symmetric(M, atol=1e-10):
    M = np.asarray(M, dtype=float)
    return M.ndim == 2 and M.shape[0] == M.shape[1] and np.allclose(M, M.T, rtol=0.0, atol=atol)


def is_positive_definite(M, atol=1e-10):
    """True when ``M`` is symmetric and admits a Cholesky factor."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not is_symmetric(M, atol=atol) or not np.all(np.isfinite(M)):
        return False
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def riccati_map(P, A, C, Q, R):
    """One sweep of the filter Riccati recursion, symmetrised."""
    APCt = A @ P @ C.T
    S = C @ P @ C.T + R
    out = A @ P @ A.T + Q - APCt @ np.linalg.solve(S, APCt.T)
    return 0.5 * (out + out.T)


def kalman_gain(P, A, C, R):
    S = C @ P @ C.T + R
    # L = A P C^T S^{-1}; S symmetric so solve on the transpose
    return np.linalg.solve(S, (A @ P @ C.T).T).T


def dare_residual(P, A, C, Q, R):
    return float(np.linalg.norm(riccati_map(P, A, C, Q, R) - P, "fro"))


def solve_dare(A, C, Q, R, tol=1e-12, max_iter=100_000):
    """Stabilising solution of the filter-form discrete algebraic Riccati equation.

    Iterates ``P <- A P A' + Q - A P C' (C P C' + R)^{-1} C P A'`` from ``P = Q``
    until successive iterates differ by at most ``tol * ||P||_F`` (relative, so
    scaling ``Q`` and ``R`` together scales ``P`` and leaves ``L`` unchanged).

    Raises:
        ValueError: on inconsistent shapes or when ``Q``/``R`` is not positive definite.
        ConvergenceError: if the iteration does not settle (typically an
            undetectable pair or severe ill-conditioning).
    """
    A = _as_square(A, "A")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    Q = _as_square(Q, "Q")
    R = _as_square(R, "R")
    n = A.shape[0]
    if C.shape[1] != n or Q.shape[0] != n or R.shape[0] != C.shape[0]:
        raise ValueError("inconsistent shapes among A, C, Q, R")
    if not is_positive_definite(R):
        raise ValueError("R must be symmetric positive definite")
    if not is_positive_definite(Q):
        raise ValueError("Q must be symmetric positive definite")

    P = Q.copy()
    for it in range(1, max_iter + 1):
        P_next = riccati_map(P, A, C, Q, R)
        if not np.all(np.isfinite(P_next)):
            raise ConvergenceError(f"Riccati iterate became non-finite at sweep {it}")
        step = np.linalg.norm(P_next - P, "fro")
        P = P_next
        if step <= tol * np.linalg.norm(P, "fro"):
            break
    else:
        raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} sweeps")

    L = kalman_gain(P, A, C, R)
    radius = spectral_radius(A - L @ C)
    if radius >= 1.0:
        raise ConvergenceError(f"converged P is not stabilising (rho(A-LC) = {radius:.6g})")
    return RiccatiSolution(P=P, L=L, closed_loop_radius=radius,
                           residual=dare_residual(P, A, C, Q, R), iterations=it)


def riccati_iterates(A, C, Q, R, count):
    """First ``count`` iterates of the recursion started at ``Q`` (diagnostics)."""
    A, C, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, C, Q, R))
    out = [Q.copy()]
    for _ in range(count - 1):
        out.append(riccati_map(out[-1], A, C, Q, R))
    return out


def estimate_unit_jordan_order(A, tol=1e-8):
    """Size of the largest Jordan block of ``A`` at eigenvalue 1 (0 if absent).

    Ranks of successive powers of ``A - I`` are computed with singular-value
    threshold ``tol * ||A - I||_2**j``; the answer is the first ``j`` at which
    the rank sequence stalls.
    """
    A = _as_square(A, "A")
    n = A.shape[0]
    M = A - np.eye(n)
    scale = np.linalg.norm(M, 2)
    if scale == 0.0:
        return 1

    def rank(j):
        Mj = np.linalg.matrix_power(M, j)
        s = np.linalg.svd(Mj, compute_uv=False)
        return int(np.sum(s > tol * scale**j))

    ranks = [n] + [rank(j) for j in range(1, n + 2)]
    if ranks[1] == n:
        return 0
    for j in range(1, n + 1):
        if ranks[j] == ranks[j + 1]:
            return j
    return n


def is_diagonalizable(M, tol=1e-8):
    """Numerical check that the eigenvector matrix of ``M`` is well conditioned."""
    M = _as_square(M)
    _, V = np.linalg.eig(M)
    return bool(np.linalg.cond(V) < 1.0 / tol)

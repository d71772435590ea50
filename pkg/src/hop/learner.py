"""Model-free H-step-ahead online predictor.

The learner regresses ``y_{t+H}`` on the window ``Z_{t,p}`` of the last ``p``
outputs, the last ``p`` inputs and the ``H-1`` already-planned future inputs,
with ridge-regularised least squares refreshed by rank-one updates. Epochs of
doubling length let ``p`` grow logarithmically. Nothing in this module touches
the plant matrices.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

log = logging.getLogger(__name__)

# relative ||R'R - V||_F / ||V||_F beyond which the factor is rebuilt
DRIFT_TOL = 1e-10
DRIFT_CHECK_EVERY = 50


class AlignmentError(RuntimeError):
    """A buffered prediction was skipped or matched to the wrong time."""


class StreamExhausted(RuntimeError):
    """The observation stream ended before the schedule was complete."""


def window_dim(p, H, m, n_u):
    return p * m + (p + H - 1) * n_u


@dataclass(frozen=True)
class RegressorWindow:
    """``z = [y_{k-p+1}; ...; y_k; u_{k-p+1}; ...; u_{k+H-1}]``."""

    z: np.ndarray
    k: int
    p: int
    H: int


def build_window(history_y, history_u, k, p, H):
    if p < 1 or H < 1:
        raise ValueError("p and H must be >= 1")
    lo = k - p + 1
    if lo < 0 or k >= len(history_y) or k + H > len(history_u):
        raise ValueError(f"insufficient history for window at k={k} (p={p}, H={H})")
    z = np.concatenate([np.ravel(history_y[lo:k + 1]), np.ravel(history_u[lo:k + H])])
    return RegressorWindow(z=z, k=k, p=p, H=H)


@dataclass
class LearnerState:
    """Ridge estimator in square-root form.

    ``factor`` is the upper-triangular ``R`` with ``R'R = gram`` and ``rhs`` is
    ``S = R^{-T} sum z y'``, so ``weights = (R^{-1} S)'``. The explicit Gram
    matrix and the raw moment ``sum z y'`` are carried alongside for checks and
    for re-factorisation.
    """

    weights: np.ndarray   # m x d
    gram: np.ndarray      # d x d, lam*I + sum z z'
    factor: np.ndarray    # d x d upper triangular
    rhs: np.ndarray       # d x m
    moment: np.ndarray    # d x m, sum z y'
    lam: float
    p: int
    H: int
    epoch: int = 0
    sample_count: int = 0
    refactorizations: int = 0
    prediction_buffer: deque = field(default_factory=deque)
    _since_check: int = 0

    @property
    def dim(self):
        return self.gram.shape[0]

    @property
    def gram_inverse(self):
        return cho_solve((self.factor, False), np.eye(self.dim))

    def inverse_drift(self):
        return float(np.linalg.norm(self.gram @ self.gram_inverse - np.eye(self.dim), 2))

    def factor_drift(self):
        """Relative mismatch between ``R'R`` and the accumulated Gram matrix."""
        R = self.factor
        return float(np.linalg.norm(R.T @ R - self.gram) / np.linalg.norm(self.gram))

    def log_det_gram(self):
        return float(2.0 * np.sum(np.log(np.abs(np.diag(self.factor)))))

    def refactorize(self):
        self.factor = np.linalg.cholesky(self.gram).T
        self.rhs = solve_triangular(self.factor, self.moment, trans="T")
        self._refresh_weights()
        self.refactorizations += 1

    def _refresh_weights(self):
        self.weights = solve_triangular(self.factor, self.rhs).T


def batch_solve(Z, Y, lam, p, H, m=None):
    """Ridge solution ``G = (sum y z') (lam I + sum z z')^{-1}``.

    ``Z`` is (N, d) with one window per row and ``Y`` is (N, m); ``m`` is only
    needed when there are no samples. Solved by QR of ``[Z; sqrt(lam) I]``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Z.ndim != 2 or Y.ndim != 2 or Z.shape[0] != Y.shape[0]:
        raise ValueError("Z and Y must be 2-D with matching sample counts")
    d = Z.shape[1]
    if m is None:
        m = Y.shape[1]
    if Y.shape[0] == 0:
        Y = np.zeros((0, m))
    Za = np.vstack([Z, math.sqrt(lam) * np.eye(d)])
    Ya = np.vstack([Y, np.zeros((d, m))])
    Qf, R = np.linalg.qr(Za)
    S = Qf.T @ Ya
    sign = np.where(np.diag(R) < 0, -1.0, 1.0)
    R = R * sign[:, None]
    S = S * sign[:, None]
    V = lam * np.eye(d) + Z.T @ Z
    state = LearnerState(weights=np.zeros((m, d)), gram=0.5 * (V + V.T), factor=R, rhs=S,
                         moment=Z.T @ Y, lam=lam, p=p, H=H, sample_count=Z.shape[0])
    state._refresh_weights()
    return state


def _rotate_in(state, z, y):
    """Fold the row ``[z' y']`` into the triangular system ``[R S]``.

    The top rows of the R-factor of ``[[R, S], [z', y']]`` are the updated
    ``[R S]`` (an orthogonal transformation, so no normal equations are formed).
    """
    d = state.dim
    M = np.empty((d + 1, d + state.rhs.shape[1]))
    M[:d, :d] = state.factor
    M[:d, d:] = state.rhs
    M[d, :d] = z
    M[d, d:] = y
    top = np.linalg.qr(M, mode="r")[:d]
    sign = np.where(np.diag(top) < 0, -1.0, 1.0)
    top *= sign[:, None]
    state.factor = np.triu(top[:, :d])
    state.rhs = top[:, d:]


def stack_samples(samples):
    """``[(RegressorWindow, y_target), ...]`` -> (Z, Y) arrays."""
    samples = list(samples)
    if not samples:
        return np.zeros((0, 0)), np.zeros((0, 0))
    keys = {(w.p, w.H, w.z.size) for w, _ in samples}
    if len(keys) != 1:
        raise ValueError("all windows must share p, H and dimension")
    Z = np.vstack([w.z for w, _ in samples])
    Y = np.vstack([np.ravel(y) for _, y in samples])
    return Z, Y


def history_samples(history_y, history_u, p, H, t_stop, t_start=None):
    """Training pairs ``(Z_{t,p}, y_{t+H})`` for t = t_start..t_stop as arrays."""
    t_start = p if t_start is None else t_start
    ts = range(t_start, t_stop + 1)
    if len(ts) == 0:
        d = window_dim(p, H, history_y.shape[1], history_u.shape[1])
        return np.zeros((0, d)), np.zeros((0, history_y.shape[1]))
    Z = np.vstack([build_window(history_y, history_u, t, p, H).z for t in ts])
    Y = np.asarray(history_y[t_start + H:t_stop + H + 1], dtype=float)
    return Z, Y


def predict(state, window):
    """Forecast ``y_{k+H}`` and queue it for scoring once ``y_{k+H}`` arrives."""
    if window.z.size != state.dim:
        raise ValueError(f"window dimension {window.z.size} != learner dimension {state.dim}")
    yhat = state.weights @ window.z
    target = window.k + state.H
    if state.prediction_buffer and state.prediction_buffer[-1][0] >= target:
        raise AlignmentError(f"prediction for time {target} issued out of order")
    state.prediction_buffer.append((target, yhat))
    return yhat


def recursive_step(state, y_k, k, delayed_window):
    """Absorb the sample ``(Z_{k-H,p}, y_k)`` once ``y_k`` is observed.

    The Gram matrix gets ``+ z z'`` and its triangular factor an orthogonal
    rank-one update; the weights move by ``(y_k - G z) z' V^{-1}`` with the
    current ``G``, which reproduces the batch ridge solution over the same
    samples. Returns the forecast that was buffered for time ``k``, or
    ``None`` if none was issued.
    """
    z = delayed_window.z
    if delayed_window.k + state.H != k or delayed_window.p != state.p:
        raise AlignmentError(f"window for base {delayed_window.k} cannot score time {k}")
    if z.size != state.dim:
        raise ValueError("window dimension does not match learner state")

    issued = None
    buf = state.prediction_buffer
    if buf and buf[0][0] < k:
        raise AlignmentError(f"prediction for time {buf[0][0]} was never matched")
    if buf and buf[0][0] == k:
        issued = buf.popleft()[1]

    y_k = np.asarray(y_k, dtype=float)
    state.gram += np.outer(z, z)
    state.moment += np.outer(z, y_k)
    _rotate_in(state, z, y_k)
    # same as G + (y_k - G z)(V^{-1} z)' but without forming V^{-1}
    state._refresh_weights()
    state.sample_count += 1

    state._since_check += 1
    if state._since_check >= DRIFT_CHECK_EVERY:
        state._since_check = 0
        if state.factor_drift() > DRIFT_TOL:
            log.debug("factor drift above %g; refactorising", DRIFT_TOL)
            state.refactorize()
    return issued


@dataclass(frozen=True)
class EpochSchedule:
    T_init: int = 400
    N_E: int = 3
    beta: float = 2.0
    H: int = 1

    def __post_init__(self):
        if self.T_init < 1 or self.N_E < 1 or self.H < 1 or self.beta <= 0:
            raise ValueError("T_init, N_E, H must be >= 1 and beta > 0")

    def T(self, l):
        """Start of epoch ``l`` (1-based)."""
        return 2 ** (l - 1) * self.T_init + 1

    def raw_p(self, l):
        return max(1, math.ceil(self.beta * math.log(self.T(l))))

    def p_of_epoch(self, l):
        p = self.raw_p(l)
        cap = self.T(l) - self.H
        if p > cap:
            log.warning("p=%d does not fit epoch %d history; clamped to %d", p, l, max(cap, 1))
            p = max(cap, 1)
        return p

    @property
    def horizon_end(self):
        """Last base time at which a prediction is made, ``2^{N_E} T_init``."""
        return 2 * self.T(self.N_E) - 2

    def epochs(self):
        for l in range(1, self.N_E + 1):
            yield l, self.T(l), self.p_of_epoch(l)


class TrajectoryStream:
    """Reveals a recorded trajectory one step at a time.

    ``step()`` returns ``(y_k, u_{k+H-1})`` for k = 0, 1, ...; the first ``H-1``
    inputs come from ``initial_inputs()``.
    """

    def __init__(self, outputs, inputs, H):
        self._y = np.asarray(outputs, dtype=float)
        self._u = np.asarray(inputs, dtype=float)
        self.H = H
        self.revealed = -1
        self.m = self._y.shape[1]
        self.n_u = self._u.shape[1]

    @classmethod
    def from_trajectory(cls, traj):
        return cls(traj.outputs, traj.inputs, traj.horizon_lead)

    def initial_inputs(self):
        return self._u[:self.H - 1].copy()

    def step(self):
        k = self.revealed + 1
        if k >= len(self._y) or k + self.H - 1 >= len(self._u):
            raise StreamExhausted(f"no observation for k={k}")
        self.revealed = k
        return self._y[k].copy(), self._u[k + self.H - 1].copy()


@dataclass(frozen=True)
class PredictionLog:
    base: np.ndarray         # base time k of each forecast
    epoch: np.ndarray
    p: np.ndarray
    predictions: np.ndarray  # forecasts of y_{k+H}
    H: int

    @property
    def targets(self):
        return self.base + self.H


def run_hop(stream, schedule, lam=1.0, on_predict=None, on_epoch=None):
    """Run the epoch-doubling online predictor against ``stream``.

    Warm-up reveals ``y_0..y_{T_1}`` without predicting. In epoch ``l`` the
    state is rebuilt by a batch ridge fit over all samples
    ``t = p..T_l - H``, then for ``k = T_l..2T_l - 2`` the learner predicts
    ``y_{k+H}``, observes ``y_{k+1}`` and absorbs the sample with base
    ``k+1-H``.

    Returns ``(PredictionLog, LearnerState)``.
    """
    H = schedule.H
    if stream.H != H:
        raise ValueError("stream input lead does not match the schedule horizon")
    N = schedule.horizon_end
    m, n_u = stream.m, stream.n_u
    ys = np.empty((N + 2, m))
    us = np.empty((N + H + 1, n_u))
    us[:H - 1] = stream.initial_inputs()
    seen = -1

    def observe():
        nonlocal seen
        y, u = stream.step()
        seen += 1
        ys[seen] = y
        us[seen + H - 1] = u

    for _ in range(schedule.T(1) + 1):
        observe()

    bases, epochs, ps, preds = [], [], [], []
    state = None
    for l, T_l, p in schedule.epochs():
        Z, Y = history_samples(ys[:seen + 1], us[:seen + H], p, H, T_l - H)
        state = batch_solve(Z, Y, lam, p, H, m=m)
        state.epoch = l
        if on_epoch is not None:
            on_epoch(l, state, ys[:seen + 1].copy(), us[:seen + H].copy())
        for k in range(T_l, 2 * T_l - 1):
            w = build_window(ys[:seen + 1], us[:seen + H], k, p, H)
            yhat = predict(state, w)
            if on_predict is not None:
                on_predict(k, yhat)
            bases.append(k)
            epochs.append(l)
            ps.append(p)
            preds.append(yhat)
            observe()
            t = k + 1 - H
            if t >= p:
                recursive_step(state, ys[k + 1], k + 1, build_window(ys, us, t, p, H))
            else:
                # window does not fit yet; drop any forecast for this time
                while state.prediction_buffer and state.prediction_buffer[0][0] <= k + 1:
                    state.prediction_buffer.popleft()
        state.prediction_buffer.clear()

    log_ = PredictionLog(base=np.asarray(bases, dtype=int), epoch=np.asarray(epochs, dtype=int),
                         p=np.asarray(ps, dtype=int),
                         predictions=np.asarray(preds, dtype=float).reshape(len(preds), m), H=H)
    return log_, state

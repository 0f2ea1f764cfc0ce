"""Constant-velocity Kalman tracker with Joseph-form covariance updates.

State is h = (x, v_x, y, v_y) with block transition [[1, T], [0, 1]] per
axis and position-only observations. The covariance measurement update
uses the Joseph form (I - K O) P (I - K O)^T + K R K^T, which preserves
symmetry and positive semidefiniteness; the 2x2 innovation system is
solved explicitly with a condition check instead of a generic inversion.

The one-step-ahead position prediction consumed by the authentication
metric is O F h right after the previous measurement has been folded in,
i.e. before the estimate at the current instant is seen.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericalError, StreamGapError
from .estimators import PositionEstimate

P0_DIAG = 1.0e3          # initial state covariance scale
V0_GUESS = 1.0           # initial velocity guess per axis, m/s

# Tuning envelope for the white-acceleration process noise intensity. The
# default suits generic tracking; for the correlated mobility model driven
# by an oracle estimator, values in [0.005, 0.1] m/s^2 smooth hardest.
Q_ACCEL_RANGE = (0.005, 1.0)


@dataclass(frozen=True)
class KalmanConfig:
    T: float                  # sampling period, s
    q_accel: float = 0.5      # white-acceleration std, m/s^2
    r_std: float = 25.0       # measurement noise std per coordinate, m

    def __post_init__(self):
        if self.T <= 0.0:
            raise ConfigError("sampling period must be positive")
        if self.q_accel < 0.0 or self.r_std < 0.0:
            raise ConfigError("noise parameters must be >= 0")

    @cached_property
    def F(self) -> np.ndarray:
        T = self.T
        return np.array([[1.0, T, 0.0, 0.0],
                         [0.0, 1.0, 0.0, 0.0],
                         [0.0, 0.0, 1.0, T],
                         [0.0, 0.0, 0.0, 1.0]])

    @cached_property
    def O(self) -> np.ndarray:
        return np.array([[1.0, 0.0, 0.0, 0.0],
                         [0.0, 0.0, 1.0, 0.0]])

    @cached_property
    def Qn(self) -> np.ndarray:
        T = self.T
        block = self.q_accel ** 2 * np.array([[T ** 4 / 4.0, T ** 3 / 2.0],
                                              [T ** 3 / 2.0, T ** 2]])
        out = np.zeros((4, 4))
        out[:2, :2] = block
        out[2:, 2:] = block
        return out

    @cached_property
    def R(self) -> np.ndarray:
        return self.r_std ** 2 * np.eye(2)


@dataclass(frozen=True)
class KalmanState:
    h: np.ndarray   # (4,) state mean
    P: np.ndarray   # (4, 4) state covariance


def init_state(p0: tuple[float, float]) -> KalmanState:
    h = np.array([p0[0], V0_GUESS, p0[1], V0_GUESS], dtype=np.float64)
    return KalmanState(h=h, P=P0_DIAG * np.eye(4))


def time_update(s: KalmanState, cfg: KalmanConfig) -> KalmanState:
    F = cfg.F
    return KalmanState(h=F @ s.h, P=F @ s.P @ F.T + cfg.Qn)


def _inv_2x2(S: np.ndarray) -> np.ndarray:
    """Explicit 2x2 inverse with a condition diagnostic."""
    a, b = S[0, 0], S[0, 1]
    c, d = S[1, 0], S[1, 1]
    det = a * d - b * c
    norm = max(abs(a) + abs(b), abs(c) + abs(d))
    if det == 0.0 or not np.isfinite(det):
        raise NumericalError(f"singular innovation covariance (det={det!r})")
    inv = np.array([[d, -b], [-c, a]]) / det
    inv_norm = max(abs(inv[0, 0]) + abs(inv[0, 1]), abs(inv[1, 0]) + abs(inv[1, 1]))
    cond = norm * inv_norm
    if cond > 1e12:
        raise NumericalError(f"ill-conditioned innovation covariance (cond~{cond:.3e})")
    return inv


def measurement_update(s: KalmanState, z: tuple[float, float],
                       cfg: KalmanConfig) -> KalmanState:
    O = cfg.O
    S = O @ s.P @ O.T + cfg.R
    K = (s.P @ O.T) @ _inv_2x2(S)           # (4, 2) gain
    innovation = np.asarray(z, dtype=np.float64) - O @ s.h
    h = s.h + K @ innovation
    iko = np.eye(4) - K @ O
    P = iko @ s.P @ iko.T + K @ cfg.R @ K.T
    return KalmanState(h=h, P=P)


def predict_position(s: KalmanState, cfg: KalmanConfig) -> tuple[float, float]:
    """One-step-ahead position from a state that has absorbed the last estimate."""
    p = cfg.O @ (cfg.F @ s.h)
    return float(p[0]), float(p[1])


@dataclass(frozen=True)
class TrackStep:
    t: float
    p_hat: tuple[float, float]     # prediction for instant t, made before p_meas
    p_meas: tuple[float, float]    # estimate consumed at instant t
    state: KalmanState             # posterior after consuming p_meas


def _check_spacing(times: Sequence[float], T: float):
    for t_prev, t_cur in zip(times, times[1:]):
        if abs((t_cur - t_prev) - T) > 1e-9 * max(1.0, T):
            raise StreamGapError(
                f"irregular sampling at t={t_cur:g}: step {t_cur - t_prev:g} != {T:g}")


def track(estimates: Sequence[PositionEstimate], cfg: KalmanConfig) -> list[TrackStep]:
    """Run the filter over an equally spaced estimate stream.

    Initializes from the first estimate and, for every later instant,
    emits the prediction before folding in that instant's estimate.
    """
    if len(estimates) < 1:
        raise ConfigError("empty estimate stream")
    _check_spacing([e.t for e in estimates], cfg.T)
    state = init_state(estimates[0].p)
    steps: list[TrackStep] = []
    for est in estimates[1:]:
        p_hat = predict_position(state, cfg)
        state = measurement_update(time_update(state, cfg), est.p, cfg)
        steps.append(TrackStep(t=est.t, p_hat=p_hat, p_meas=est.p, state=state))
    return steps

"""Position-estimator seam: Gaussian-noise oracle and file-backed estimates.

The localization model itself is pluggable behind this contract; every
estimator emits one position estimate per sampling instant. The oracle
perturbs the true position with i.i.d. zero-mean Gaussian noise of
per-component std sigma_pos, the methodology used to evaluate predictors
independently of a trained localizer. Estimates computed elsewhere can be
loaded from CSV.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fileio
from .errors import ConfigError
from .mobility import Trajectory
from .rng import Stream, derive_seed


@dataclass(frozen=True)
class PositionEstimate:
    t: float
    p: tuple[float, float]
    source: str = "oracle"   # {oracle | external}


@dataclass(frozen=True)
class OracleConfig:
    sigma_pos: float   # per-component noise std, m

    def __post_init__(self):
        if self.sigma_pos < 0.0:
            raise ConfigError(f"sigma_pos must be >= 0, got {self.sigma_pos}")


def _time_label(t: float) -> int:
    # Bit pattern of the sampling instant, so the draw is a pure function
    # of (seed, t) and estimates are randomly accessible.
    return int(np.float64(t).view(np.int64))


def oracle_estimate(true_p: tuple[float, float], cfg: OracleConfig, seed: int,
                    t: float) -> PositionEstimate:
    """Noisy view of the true position; deterministic given (seed, t)."""
    w = Stream(derive_seed(seed, _time_label(t))).normal(2)
    return PositionEstimate(
        t=t,
        p=(true_p[0] + cfg.sigma_pos * float(w[0]), true_p[1] + cfg.sigma_pos * float(w[1])),
        source="oracle")


def estimate_trajectory(traj: Trajectory, cfg: OracleConfig, seed: int) -> list[PositionEstimate]:
    """One oracle estimate per trajectory sample."""
    return [oracle_estimate(s.p, cfg, seed, s.t) for s in traj.samples]


def load_estimates(path: str) -> list[PositionEstimate]:
    """Parse an estimate CSV (t_s,x_m,y_m) into an ordered estimate stream.

    Rejects malformed rows, non-monotone or irregularly spaced timestamps,
    and non-finite coordinates, each with the offending line number.
    """
    rows = fileio.read_estimates_csv(path)
    return [PositionEstimate(t=t, p=(x, y), source="external") for t, x, y in rows]

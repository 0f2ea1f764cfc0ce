"""Authentication metric, threshold test, and detection-error tradeoff curves.

A message at instant t is scored by the squared Euclidean distance between
the predicted and estimated positions; it is accepted while the score
stays below a threshold. The first pilot instants (warm-up, higher-layer
authenticated) produce scores but no decisions and never enter the rate
estimates. DET curves sweep the threshold over the observed scores plus
the two degenerate endpoints, so monotonicity holds by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError

N_WARMUP_DEFAULT = 10


@dataclass(frozen=True)
class AuthSample:
    t: float
    E: float                  # squared prediction error, m^2
    decision: int | None      # None during warm-up
    truth: int                # 0 legitimate, 1 attack


@dataclass(frozen=True)
class DetCurve:
    points: tuple[tuple[float, float, float], ...]   # (lambda, p_fa, p_md)

    def __post_init__(self):
        prev_fa, prev_md = math.inf, -math.inf
        for lam, p_fa, p_md in self.points:
            if not (0.0 <= p_fa <= 1.0 and 0.0 <= p_md <= 1.0):
                raise DataError("DET probabilities must lie in [0, 1]")
            if p_fa > prev_fa or p_md < prev_md:
                raise DataError("DET curve violates threshold monotonicity")
            prev_fa, prev_md = p_fa, p_md


def squared_error(p_hat: tuple[float, float], p_tilde: tuple[float, float]) -> float:
    dx = p_hat[0] - p_tilde[0]
    dy = p_hat[1] - p_tilde[1]
    return dx * dx + dy * dy


def decide(E: float, lam: float) -> int:
    """0 (authentic) iff E < lambda, 1 (fake) iff E >= lambda."""
    if lam < 0.0:
        raise ConfigError("threshold must be >= 0")
    return 0 if E < lam else 1


def run_protocol(predictions: Sequence[tuple[float, tuple[float, float]]],
                 estimates: Sequence, lam: float,
                 n_warmup: int = N_WARMUP_DEFAULT,
                 truth: Sequence[int] | None = None) -> list[AuthSample]:
    """Score aligned prediction/estimate streams and decide after warm-up.

    Predictions are (t, p_hat) pairs; estimates must cover the same
    instants (matching t within 1e-9). Decisions start at the first sample
    index greater than n_warmup; earlier samples carry only the score.
    The optional truth labels are indexed by sample index (ell = t / T).
    """
    est_by_index = {k: e for k, e in enumerate(estimates)}
    out: list[AuthSample] = []
    for k, (t, p_hat) in enumerate(predictions):
        est = est_by_index.get(k)
        if est is None or abs(est.t - t) > 1e-9 * max(1.0, abs(t)):
            raise DataError(f"misaligned streams at prediction {k} (t={t:g})")
        e_val = squared_error(p_hat, est.p)
        ell = k + 1   # predictions start one sampling period in
        label = 0 if truth is None else int(truth[ell])
        decision = decide(e_val, lam) if ell > n_warmup else None
        out.append(AuthSample(t=t, E=e_val, decision=decision, truth=label))
    return out


def empirical_rates(samples: Sequence[AuthSample],
                    lam: float | None = None) -> tuple[float, float]:
    """(p_FA, p_MD) over decided samples; both truth classes must appear.

    With lam given, decisions are re-derived from the stored scores at that
    threshold (warm-up samples stay excluded); otherwise the recorded
    decisions are used.
    """
    fa_n = fa_d = md_n = md_d = 0
    for s in samples:
        if s.decision is None:
            continue
        d = s.decision if lam is None else decide(s.E, lam)
        if s.truth == 0:
            fa_d += 1
            fa_n += d
        else:
            md_d += 1
            md_n += 1 - d
    if fa_d == 0 or md_d == 0:
        raise DataError("both truth classes are required to estimate (p_FA, p_MD)")
    return fa_n / fa_d, md_n / md_d


def det_curve(legit_E: Sequence[float], attack_E: Sequence[float]) -> DetCurve:
    """Empirical DET: threshold swept over observed scores plus 0 and +inf."""
    legit = np.asarray(legit_E, dtype=np.float64)
    attack = np.asarray(attack_E, dtype=np.float64)
    if legit.size == 0 or attack.size == 0:
        raise DataError("both score multisets must be non-empty")
    if np.any(legit < 0) or np.any(attack < 0):
        raise DataError("squared errors must be >= 0")
    thresholds = np.unique(np.concatenate([[0.0], legit, attack, [np.inf]]))
    legit_sorted = np.sort(legit)
    attack_sorted = np.sort(attack)
    points = []
    for lam in thresholds:
        # decision 1 iff E >= lambda
        p_fa = 1.0 - np.searchsorted(legit_sorted, lam, side="left") / legit.size
        p_md = np.searchsorted(attack_sorted, lam, side="left") / attack.size
        points.append((float(lam), float(p_fa), float(p_md)))
    return DetCurve(points=tuple(points))


def threshold_for_false_alarm(legit_E: Sequence[float], p_fa_target: float) -> float:
    """Smallest observed threshold whose empirical p_FA is <= the target."""
    legit = np.sort(np.asarray(legit_E, dtype=np.float64))
    if legit.size == 0:
        raise DataError("empty legitimate score set")
    if not 0.0 <= p_fa_target <= 1.0:
        raise ConfigError("p_FA target must be in [0, 1]")
    candidates = np.unique(legit)
    p_fa = 1.0 - np.searchsorted(legit, candidates, side="left") / legit.size
    hits = np.nonzero(p_fa <= p_fa_target)[0]
    return float(candidates[hits[0]]) if hits.size else float("inf")

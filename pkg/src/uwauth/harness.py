"""Scenario configuration, Monte-Carlo orchestration, and summary statistics.

A scenario is described by a flat key-value configuration (JSON object
with dotted keys). Every trial is a pure function of the configuration
and a per-trial seed derived from the master seed with a splitmix-style
expansion, so runs are reproducible bit for bit regardless of how many
workers execute the trials. One directory per run holds a config
snapshot, per-trial CSV artifacts, the pooled DET curve, and
summary.json.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from multiprocessing import Pool

import numpy as np

from . import auth as auth_mod
from . import fileio
from . import kalman as kalman_mod
from . import rnn as rnn_mod
from .channel import (Environment, Position3, SubbandGrid, add_noise,
                      channel_snapshot, reference_power)
from .errors import ConfigError, DataError
from .estimators import OracleConfig, PositionEstimate, estimate_trajectory
from .mobility import (Area, AttackScenario, GaussMarkovParams, Trajectory,
                       compose_attack_trace, simulate_trajectory, spawn_attacker)
from .rng import derive_seed
from .scm import fold_tensor, scm_from_snapshot

parse_arrivals_file = fileio.parse_arrivals_jsonl

# seed-derivation tags
_TAG_TRIAL = 101
_TAG_TRAJ = 1
_TAG_EVE = 2
_TAG_EST = 3
_TAG_NOISE = 4
_TAG_CALIB = 5

_DEF_RX_X = 1970.0
_DEF_RX_Y = tuple(1230.0 + 10.0 * i for i in range(10))

_DEFAULTS: dict[str, object] = {
    "mobility.alpha": 1.0 - 2.0e-3,
    "mobility.T_s": 10.0,
    "mobility.sigma_v_mps": 2.0,
    "mobility.v0_mps": 2.0,
    "mobility.depth_m": 50.0,
    "mobility.area_m": [313.0, 1813.0, 275.0, 2275.0],
    "trace.M": 50,
    "receivers.positions_m": [[_DEF_RX_X, y] for y in _DEF_RX_Y],
    "receivers.depth_m": 50.0,
    "grid.f0_hz": 11500.0,
    "grid.bandwidth_hz": 5000.0,
    "grid.k": 48,
    "channel.enabled": True,
    "channel.snr_db": 20.0,
    "channel.depth_water_m": 100.0,
    "channel.sound_speed_mps": 1500.0,
    "channel.surface_reflection": [-1.0, 0.0],
    "channel.bottom_reflection": [0.5, 0.0],
    "channel.max_bounces": 4,
    "channel.temperature_c": 14.0,
    "channel.salinity_ppt": 35.0,
    "channel.ph": 8.0,
    "channel.n_calibration": 16,
    "estimator.kind": "oracle",
    "estimator.sigma_pos_m": 25.0,
    "predictor.kind": "kalman",
    "kalman.T": 10.0,
    "kalman.q_accel": 0.02,
    "kalman.r_std": 25.0,
    "rnn.model_path": "",
    "attack.onset_index": 35,
    "attack.standoff_m": 500.0,
    "attack.eve_v0_mps": 1.0,
    "attack.heading_halfwidth_rad": math.pi / 4.0,
    "auth.lambda_m2": 5.0e4,
    "auth.n_warmup": 10,
    "trials.n_legit": 500,
    "trials.n_attack": 500,
    "seed": 12345,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated view over the flat configuration mapping."""

    flat: tuple[tuple[str, object], ...]

    @staticmethod
    def from_flat(values: dict[str, object] | None = None) -> "ScenarioConfig":
        merged = dict(_DEFAULTS)
        for key, val in (values or {}).items():
            if key not in _DEFAULTS:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = val
        cfg = ScenarioConfig(flat=tuple(sorted(merged.items(), key=lambda kv: kv[0])))
        cfg.validate()
        return cfg

    @staticmethod
    def load(path: str) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except ValueError as exc:
                raise ConfigError(f"{path}: malformed JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: configuration must be a JSON object")
        return ScenarioConfig.from_flat(data)

    def __getitem__(self, key: str):
        return dict(self.flat)[key]

    def replace(self, **dotted) -> "ScenarioConfig":
        values = dict(self.flat)
        values.update({k.replace("__", "."): v for k, v in dotted.items()})
        return ScenarioConfig.from_flat(values)

    def with_updates(self, updates: dict[str, object]) -> "ScenarioConfig":
        values = dict(self.flat)
        values.update(updates)
        return ScenarioConfig.from_flat(values)

    def to_json(self) -> str:
        return json.dumps(dict(self.flat), sort_keys=True, indent=2) + "\n"

    # ---- structured views -------------------------------------------------

    def mobility_params(self) -> GaussMarkovParams:
        return GaussMarkovParams(
            alpha=float(self["mobility.alpha"]),
            T=float(self["mobility.T_s"]),
            sigma_v=float(self["mobility.sigma_v_mps"]),
            v0=float(self["mobility.v0_mps"]),
            depth=float(self["mobility.depth_m"]),
            area=Area(*[float(v) for v in self["mobility.area_m"]]))

    def attack_scenario(self) -> AttackScenario:
        return AttackScenario(
            onset_index=int(self["attack.onset_index"]),
            standoff=float(self["attack.standoff_m"]),
            eve_v0=float(self["attack.eve_v0_mps"]),
            eve_heading_halfwidth=float(self["attack.heading_halfwidth_rad"]))

    def environment(self) -> Environment:
        sr = self["channel.surface_reflection"]
        br = self["channel.bottom_reflection"]
        return Environment(
            depth_water=float(self["channel.depth_water_m"]),
            sound_speed=float(self["channel.sound_speed_mps"]),
            surface_reflection=complex(float(sr[0]), float(sr[1])),
            bottom_reflection=complex(float(br[0]), float(br[1])),
            max_bounces=int(self["channel.max_bounces"]),
            temperature=float(self["channel.temperature_c"]),
            salinity=float(self["channel.salinity_ppt"]),
            ph=float(self["channel.ph"]))

    def grid(self) -> SubbandGrid:
        return SubbandGrid(f0=float(self["grid.f0_hz"]),
                           B=float(self["grid.bandwidth_hz"]),
                           K=int(self["grid.k"]))

    def receivers(self) -> list[Position3]:
        depth = float(self["receivers.depth_m"])
        return [Position3(float(p[0]), float(p[1]), depth)
                for p in self["receivers.positions_m"]]

    def kalman_config(self) -> kalman_mod.KalmanConfig:
        return kalman_mod.KalmanConfig(T=float(self["kalman.T"]),
                                       q_accel=float(self["kalman.q_accel"]),
                                       r_std=float(self["kalman.r_std"]))

    def oracle_config(self) -> OracleConfig:
        return OracleConfig(sigma_pos=float(self["estimator.sigma_pos_m"]))

    def validate(self):
        self.mobility_params()
        self.grid()
        self.environment()
        if int(self["trace.M"]) < 2:
            raise ConfigError("trace.M must be >= 2")
        if len(self.receivers()) < 1:
            raise ConfigError("at least one receiver is required")
        if self["estimator.kind"] != "oracle":
            raise ConfigError(f"unsupported estimator kind {self['estimator.kind']!r}")
        if self["predictor.kind"] not in ("kalman", "rnn", "identity"):
            raise ConfigError(f"unsupported predictor kind {self['predictor.kind']!r}")
        if self["predictor.kind"] == "rnn" and not self["rnn.model_path"]:
            raise ConfigError("predictor.kind=rnn requires rnn.model_path")
        if float(self["auth.lambda_m2"]) < 0.0:
            raise ConfigError("auth.lambda_m2 must be >= 0")
        if int(self["auth.n_warmup"]) < 0:
            raise ConfigError("auth.n_warmup must be >= 0")
        if int(self["trials.n_legit"]) < 0 or int(self["trials.n_attack"]) < 0:
            raise ConfigError("trial counts must be >= 0")
        if int(self["channel.n_calibration"]) < 1:
            raise ConfigError("channel.n_calibration must be >= 1")
        n_a = int(self["attack.onset_index"])
        if not 0 < n_a < int(self["trace.M"]):
            raise ConfigError("attack.onset_index must satisfy 0 < index < trace.M")


@lru_cache(maxsize=4)
def _load_rnn_model(path: str) -> rnn_mod.RnnModel:
    return rnn_mod.load_model(path)


def predict_stream(cfg: ScenarioConfig,
                   estimates: list[PositionEstimate]) -> list[tuple[float, tuple[float, float]]]:
    """Dispatch the configured predictor over an estimate stream."""
    kind = cfg["predictor.kind"]
    if kind == "kalman":
        steps = kalman_mod.track(estimates, cfg.kalman_config())
        return [(s.t, s.p_hat) for s in steps]
    if kind == "identity":
        return [(estimates[k + 1].t, estimates[k].p) for k in range(len(estimates) - 1)]
    model = _load_rnn_model(str(cfg["rnn.model_path"]))
    return rnn_mod.predict_next(model, estimates)


def calibration_positions(cfg: ScenarioConfig, seed: int) -> np.ndarray:
    """Per-receiver annulus probes at 200..300 m range, pooled."""
    from .channel import CAL_RANGE_MIN, CAL_RANGE_MAX
    from .rng import Stream

    receivers = cfg.receivers()
    n = int(cfg["channel.n_calibration"])
    stream = Stream(derive_seed(seed, _TAG_CALIB))
    out = []
    for rx in receivers:
        u = stream.uniform_co(2 * n)
        radius = np.sqrt(CAL_RANGE_MIN ** 2 + u[:n] * (CAL_RANGE_MAX ** 2 - CAL_RANGE_MIN ** 2))
        angle = 2.0 * np.pi * u[n:]
        out.append(np.stack([rx.x + radius * np.cos(angle),
                             rx.y + radius * np.sin(angle)], axis=1))
    return np.concatenate(out, axis=0)


# ------------------------------------------------------------------ summaries

@dataclass(frozen=True)
class RunSummary:
    rmse_x: float | None
    rmse_y: float | None
    mape_x: float | None
    mape_y: float | None
    median_err: float | None
    q1: float | None
    q3: float | None
    whisker_lo: float | None
    whisker_hi: float | None
    n_excluded_mape: int
    p_fa: float | None
    p_md: float | None

    def to_json(self) -> str:
        doc = {
            "rmse_x_m": self.rmse_x, "rmse_y_m": self.rmse_y,
            "mape_x_pct": self.mape_x, "mape_y_pct": self.mape_y,
            "median_err_m": self.median_err, "q1_m": self.q1, "q3_m": self.q3,
            "p_fa": self.p_fa, "p_md": self.p_md,
            "n_excluded_mape": self.n_excluded_mape,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


MAPE_MIN_COORD = 1.0   # |coordinate| below this is excluded from MAPE


def summarize_errors(true_xy: np.ndarray, pred_xy: np.ndarray) -> RunSummary:
    """Per-coordinate RMSE/MAPE and Euclidean-error box statistics.

    MAPE excludes samples whose true coordinate magnitude is below 1 m and
    reports how many were dropped; quartiles use linear interpolation and
    whiskers sit at 1.5 IQR clamped to the data range.
    """
    true_xy = np.asarray(true_xy, dtype=np.float64).reshape(-1, 2)
    pred_xy = np.asarray(pred_xy, dtype=np.float64).reshape(-1, 2)
    if true_xy.shape != pred_xy.shape or true_xy.shape[0] == 0:
        raise DataError("need matching, non-empty true/predicted position sets")
    delta = pred_xy - true_xy
    rmse = np.sqrt(np.mean(delta ** 2, axis=0))
    n_excluded = 0
    mape = []
    for axis in range(2):
        keep = np.abs(true_xy[:, axis]) >= MAPE_MIN_COORD
        n_excluded += int(np.sum(~keep))
        mape.append(100.0 * float(np.mean(np.abs(delta[keep, axis] / true_xy[keep, axis])))
                    if np.any(keep) else None)
    err = np.hypot(delta[:, 0], delta[:, 1])
    q1, med, q3 = (float(v) for v in np.quantile(err, [0.25, 0.5, 0.75]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    whisker_lo = float(err[err >= lo_fence].min())
    whisker_hi = float(err[err <= hi_fence].max())
    return RunSummary(rmse_x=float(rmse[0]), rmse_y=float(rmse[1]),
                      mape_x=mape[0], mape_y=mape[1],
                      median_err=med, q1=q1, q3=q3,
                      whisker_lo=whisker_lo, whisker_hi=whisker_hi,
                      n_excluded_mape=n_excluded, p_fa=None, p_md=None)


# ---------------------------------------------------------------- trial runner

@dataclass(frozen=True)
class TrialResult:
    trial_id: str
    truth: np.ndarray            # per-sample labels
    times: np.ndarray
    positions: np.ndarray        # true positions (composed trace)
    velocities: np.ndarray
    estimates: list[PositionEstimate]
    predictions: list[tuple[float, tuple[float, float]]]
    samples: list[auth_mod.AuthSample]
    arrivals_records: list | None
    folded_tensors: list[np.ndarray] | None


def run_trial(cfg: ScenarioConfig, kind: str, index: int,
              p_ref: np.ndarray | None = None) -> TrialResult:
    """One full pipeline pass; pure function of (cfg, kind, index)."""
    master = int(cfg["seed"])
    n_legit = int(cfg["trials.n_legit"])
    global_index = index if kind == "legit" else n_legit + index
    trial_seed = derive_seed(master, _TAG_TRIAL, global_index)
    params = cfg.mobility_params()
    M = int(cfg["trace.M"])
    alice = simulate_trajectory(params, M, derive_seed(trial_seed, _TAG_TRAJ))
    if kind == "attack":
        scenario = cfg.attack_scenario()
        eve = spawn_attacker(alice, scenario, params, derive_seed(trial_seed, _TAG_EVE))
        trace, labels = compose_attack_trace(alice, eve, scenario.onset_index)
    else:
        trace, labels = alice, np.zeros(M, dtype=np.int64)

    arrivals_records = None
    folded = None
    if bool(cfg["channel.enabled"]):
        from .channel import synthesize_arrivals
        env = cfg.environment()
        grid = cfg.grid()
        receivers = cfg.receivers()
        tx_depth = float(cfg["mobility.depth_m"])
        if p_ref is None:
            p_ref = reference_power(calibration_positions(cfg, master), tx_depth,
                                    receivers, env, grid)
        arrivals_records = []
        folded = []
        snr = float(cfg["channel.snr_db"])
        for ell, state in enumerate(trace.samples):
            tx = Position3(state.p[0], state.p[1], tx_depth)
            for r, rx in enumerate(receivers):
                arrivals_records.append((ell, r, synthesize_arrivals(tx, rx, env, grid.f0)))
            snap = channel_snapshot(tx, receivers, env, grid)
            noisy = add_noise(snap, snr, p_ref, derive_seed(trial_seed, _TAG_NOISE, ell))
            folded.append(fold_tensor(scm_from_snapshot(noisy.gains)).folded)

    estimates = estimate_trajectory(trace, cfg.oracle_config(),
                                    derive_seed(trial_seed, _TAG_EST))
    predictions = predict_stream(cfg, estimates)
    samples = auth_mod.run_protocol(predictions, estimates[1:],
                                    float(cfg["auth.lambda_m2"]),
                                    int(cfg["auth.n_warmup"]), truth=labels)
    return TrialResult(
        trial_id=f"{kind}-{index:04d}",
        truth=labels, times=trace.times(), positions=trace.positions(),
        velocities=trace.velocities(), estimates=estimates,
        predictions=predictions, samples=samples,
        arrivals_records=arrivals_records, folded_tensors=folded)


def write_trial_artifacts(out_dir: str, res: TrialResult):
    trial_dir = os.path.join(out_dir, "trials", res.trial_id)
    os.makedirs(trial_dir, exist_ok=True)
    fileio.write_trajectory_csv(os.path.join(trial_dir, "trajectory.csv"),
                                res.times, res.positions, res.velocities, res.truth)
    fileio.write_estimates_csv(os.path.join(trial_dir, "estimates.csv"), res.estimates)
    fileio.write_predictions_csv(
        os.path.join(trial_dir, "predictions.csv"),
        [(t, p[0], p[1], e.p[0], e.p[1])
         for (t, p), e in zip(res.predictions, res.estimates[1:])])
    fileio.write_decisions_csv(
        os.path.join(trial_dir, "decisions.csv"),
        [(res.trial_id, s.t, s.E, s.decision, s.truth) for s in res.samples])
    if res.arrivals_records is not None:
        fileio.write_arrivals_jsonl(os.path.join(trial_dir, "arrivals.jsonl"),
                                    res.arrivals_records)
    if res.folded_tensors is not None:
        for ell, folded in enumerate(res.folded_tensors):
            fileio.export_folded_tensor(os.path.join(trial_dir, f"scm_{ell:03d}"), folded)


def _trial_worker(args) -> TrialResult:
    flat, kind, index, p_ref = args
    cfg = ScenarioConfig.from_flat(dict(flat))
    return run_trial(cfg, kind, index, p_ref=np.asarray(p_ref) if p_ref is not None else None)


def summarize_trials(results: list[TrialResult]) -> RunSummary:
    """Prediction-error stats over legitimate trials, rates over all decided samples."""
    true_pts, pred_pts = [], []
    for res in results:
        if int(np.max(res.truth)) == 0:
            for k, (_, p_hat) in enumerate(res.predictions):
                true_pts.append(res.positions[k + 1])
                pred_pts.append(p_hat)
    base = (summarize_errors(np.array(true_pts), np.array(pred_pts))
            if true_pts else RunSummary(*([None] * 9), 0, None, None))
    decided = [s for res in results for s in res.samples if s.decision is not None]
    fa_d = [s for s in decided if s.truth == 0]
    md_d = [s for s in decided if s.truth == 1]
    p_fa = sum(s.decision for s in fa_d) / len(fa_d) if fa_d else None
    p_md = sum(1 - s.decision for s in md_d) / len(md_d) if md_d else None
    return RunSummary(**{**base.__dict__, "p_fa": p_fa, "p_md": p_md})


def pooled_det(results: list[TrialResult]) -> auth_mod.DetCurve | None:
    legit = [s.E for res in results for s in res.samples
             if s.decision is not None and s.truth == 0]
    attack = [s.E for res in results for s in res.samples
              if s.decision is not None and s.truth == 1]
    if not legit or not attack:
        return None
    return auth_mod.det_curve(legit, attack)


def run_monte_carlo(cfg: ScenarioConfig, out_dir: str,
                    n_workers: int = 1) -> tuple[RunSummary, list[TrialResult]]:
    """Run all configured trials, write artifacts, and aggregate.

    Results are identical for any worker count: trials use independent
    derived seeds, files are written from a deterministic ordering, and
    the aggregation is a commutative reduction over per-trial outputs.
    """
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(cfg.to_json())
    p_ref = None
    if bool(cfg["channel.enabled"]):
        p_ref = reference_power(calibration_positions(cfg, int(cfg["seed"])),
                                float(cfg["mobility.depth_m"]), cfg.receivers(),
                                cfg.environment(), cfg.grid())
    specs = [(cfg.flat, "legit", i, p_ref) for i in range(int(cfg["trials.n_legit"]))]
    specs += [(cfg.flat, "attack", i, p_ref) for i in range(int(cfg["trials.n_attack"]))]
    if n_workers > 1 and len(specs) > 1:
        with Pool(processes=n_workers) as pool:
            results = pool.map(_trial_worker, specs)
    else:
        results = [_trial_worker(s) for s in specs]
    results.sort(key=lambda r: r.trial_id)
    for res in results:
        write_trial_artifacts(out_dir, res)
    det = pooled_det(results)
    if det is not None:
        fileio.write_det_csv(os.path.join(out_dir, "det.csv"), det.points)
    summary = summarize_trials(results)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(summary.to_json())
    return summary, results

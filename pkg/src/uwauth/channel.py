"""Multipath channel synthesis over a flat waveguide, sub-band responses, noise.

A desk-scale stand-in for a full ray tracer: transmitter and receivers sit
in a constant-sound-speed waveguide bounded by a pressure-release surface
(z = 0) and a partially reflecting bottom (z = depth_water). Every
eigenray up to a configured number of boundary bounces is enumerated with
the image method; each path contributes a complex amplitude

    a = gamma_s^{n_s} * gamma_b^{n_b} * 10^(-a(f0) * r / 20000) / r

(spherical spreading 1/r, absorption a in dB/km applied at the carrier so
arrivals stay frequency independent) and a delay r / c. Sub-band gains are
then the coherent multipath sum

    H_k = sum_i a_i * exp(-j 2 pi f_k tau_i)

on a grid of K bins centered inside [f0 - B/2, f0 + B/2].

Measurement noise is circularly-symmetric complex Gaussian calibrated so
that a requested SNR holds against the average received power of each
receiver over calibration positions at 200..300 m range.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .rng import Stream

CAL_RANGE_MIN = 200.0
CAL_RANGE_MAX = 300.0


class Position3(NamedTuple):
    """Horizontal coordinates plus depth (positive down), all meters."""

    x: float
    y: float
    depth: float


@dataclass(frozen=True)
class Environment:
    depth_water: float = 100.0
    sound_speed: float = 1500.0
    surface_reflection: complex = -1.0 + 0.0j
    bottom_reflection: complex = 0.5 + 0.0j
    max_bounces: int = 4
    temperature: float = 14.0     # deg C, supported range [12, 24]
    salinity: float = 35.0        # ppt, supported range [30, 35]
    ph: float = 8.0               # supported range [6, 9]
    absorption_db_km: float | None = None   # override; None -> Thorp model

    def __post_init__(self):
        if self.depth_water <= 0.0:
            raise ConfigError("water depth must be positive")
        if self.sound_speed <= 0.0:
            raise ConfigError("sound speed must be positive")
        if abs(self.surface_reflection) > 1.0 + 1e-12 or abs(self.bottom_reflection) > 1.0 + 1e-12:
            raise ConfigError("reflection coefficient magnitudes must be <= 1")
        if self.max_bounces < 0:
            raise ConfigError("max_bounces must be >= 0")
        if not 12.0 <= self.temperature <= 24.0:
            raise ConfigError(f"temperature {self.temperature} outside supported [12, 24] degC")
        if not 30.0 <= self.salinity <= 35.0:
            raise ConfigError(f"salinity {self.salinity} outside supported [30, 35] ppt")
        if not 6.0 <= self.ph <= 9.0:
            raise ConfigError(f"pH {self.ph} outside supported [6, 9]")


@dataclass(frozen=True)
class SubbandGrid:
    f0: float     # center frequency, Hz
    B: float      # bandwidth, Hz
    K: int        # number of sub-bands

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("sub-band count must be >= 1")
        if self.B <= 0.0:
            raise ConfigError("bandwidth must be positive")
        if self.f0 - self.B / 2.0 <= 0.0:
            raise ConfigError("band must lie at positive frequencies")


def subband_frequencies(grid: SubbandGrid) -> np.ndarray:
    """Centers of K equal bins spanning [f0 - B/2, f0 + B/2], in Hz."""
    k = np.arange(1, grid.K + 1, dtype=np.float64)
    return grid.f0 - grid.B / 2.0 + (k - 0.5) * grid.B / grid.K


def thorp_absorption(f_hz: float, env: Environment) -> float:
    """Seawater absorption in dB/km at frequency f_hz.

    Classic Thorp at the (14 degC, 35 ppt, pH 8) baseline, with
    multiplicative corrections on its physical terms: the boric-acid term
    scales as 10^(0.78 (pH - 8)), the magnesium-sulfate term as
    (S / 35) * exp(-(T - 14) / 17), and the viscous term as
    exp(-(T - 14) / 27). Each factor is 1 at the baseline, monotone in its
    parameter, and the total stays strictly increasing in frequency.
    """
    if f_hz <= 0.0:
        raise ConfigError("frequency must be positive")
    f2 = (f_hz / 1000.0) ** 2
    boric = 0.11 * f2 / (1.0 + f2) * 10.0 ** (0.78 * (env.ph - 8.0))
    mgso4 = (44.0 * f2 / (4100.0 + f2) * (env.salinity / 35.0)
             * math.exp(-(env.temperature - 14.0) / 17.0))
    viscous = 2.75e-4 * f2 * math.exp(-(env.temperature - 14.0) / 27.0)
    return boric + mgso4 + viscous + 0.003


@dataclass(frozen=True)
class ArrivalSet:
    """Eigenray amplitudes and delays, sorted by increasing delay."""

    amplitudes: np.ndarray   # complex
    delays: np.ndarray       # s

    def __len__(self) -> int:
        return len(self.delays)


def _image_terms(z_s: float, z_r: float, h: float, max_bounces: int):
    """Yield (vertical offset, n_surface, n_bottom) for every image path."""
    # Even images z = 2mh + z_s: |m| surface and |m| bottom bounces.
    m = 0
    while 2 * abs(m) <= max_bounces:
        yield 2.0 * m * h + z_s - z_r, abs(m), abs(m)
        if m > 0 and 2 * m <= max_bounces:
            yield -2.0 * m * h + z_s - z_r, m, m
        m += 1
    # Odd images z = 2mh - z_s: for m >= 1, m bottom and m-1 surface
    # bounces; for m <= 0, |m| bottom and |m|+1 surface bounces.
    m = 1
    while 2 * m - 1 <= max_bounces:
        yield 2.0 * m * h - z_s - z_r, m - 1, m
        m += 1
    m = 0
    while 2 * abs(m) + 1 <= max_bounces:
        yield 2.0 * m * h - z_s - z_r, abs(m) + 1, abs(m)
        m -= 1


def synthesize_arrivals(tx: Position3, rx: Position3, env: Environment,
                        f0: float) -> ArrivalSet:
    """Enumerate image-method eigenrays between a transmitter and a receiver."""
    if not 0.0 < tx.depth < env.depth_water or not 0.0 < rx.depth < env.depth_water:
        raise ConfigError("device depths must lie strictly inside the water column")
    rho = math.hypot(tx.x - rx.x, tx.y - rx.y)
    if rho == 0.0 and tx.depth == rx.depth:
        raise ConfigError("coincident transmitter and receiver")
    a_dbkm = env.absorption_db_km
    if a_dbkm is None:
        a_dbkm = thorp_absorption(f0, env)
    amps = []
    delays = []
    for zeta, n_s, n_b in _image_terms(tx.depth, rx.depth, env.depth_water, env.max_bounces):
        r = math.hypot(rho, zeta)
        gain = (env.surface_reflection ** n_s) * (env.bottom_reflection ** n_b)
        amps.append(gain * 10.0 ** (-a_dbkm * r / 20000.0) / r)
        delays.append(r / env.sound_speed)
    order = np.argsort(delays, kind="stable")
    return ArrivalSet(amplitudes=np.asarray(amps, dtype=np.complex128)[order],
                      delays=np.asarray(delays, dtype=np.float64)[order])


def frequency_response(arrivals: ArrivalSet, grid: SubbandGrid) -> np.ndarray:
    """Coherent multipath sum at every sub-band center; shape (K,)."""
    if len(arrivals) == 0:
        raise DataError("empty arrival set")
    f = subband_frequencies(grid)
    phase = np.exp(-2j * np.pi * np.outer(f, arrivals.delays))
    return phase @ arrivals.amplitudes


@dataclass(frozen=True)
class ChannelSnapshot:
    """Per-receiver sub-band gains at one sampling instant; shape (N_rx, K)."""

    gains: np.ndarray
    noisy: bool = False

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=np.complex128)
        if g.ndim != 2:
            raise ConfigError("snapshot gains must be a 2D (N_rx, K) matrix")
        if not np.all(np.isfinite(g)):
            raise DataError("non-finite channel gains")
        object.__setattr__(self, "gains", g)


def channel_snapshot(tx: Position3, receivers: Sequence[Position3],
                     env: Environment, grid: SubbandGrid) -> ChannelSnapshot:
    """Noiseless snapshot of all receiver gains for one transmitter position."""
    rows = [frequency_response(synthesize_arrivals(tx, rx, env, grid.f0), grid)
            for rx in receivers]
    return ChannelSnapshot(gains=np.vstack(rows), noisy=False)


def reference_power(alice_positions: np.ndarray, tx_depth: float,
                    receivers: Sequence[Position3], env: Environment,
                    grid: SubbandGrid) -> np.ndarray:
    """Average |H|^2 per receiver over calibration positions at 200..300 m.

    For each receiver only the positions whose horizontal range to it falls
    inside [200, 300] m contribute; the mean runs over those positions and
    all sub-bands.
    """
    pos = np.asarray(alice_positions, dtype=np.float64).reshape(-1, 2)
    if pos.shape[0] == 0:
        raise DataError("empty calibration set")
    power = np.zeros(len(receivers), dtype=np.float64)
    for r, rx in enumerate(receivers):
        ranges = np.hypot(pos[:, 0] - rx.x, pos[:, 1] - rx.y)
        in_band = (ranges >= CAL_RANGE_MIN) & (ranges <= CAL_RANGE_MAX)
        if not np.any(in_band):
            raise DataError(
                f"no calibration position within [{CAL_RANGE_MIN:g}, {CAL_RANGE_MAX:g}] m "
                f"of receiver {r}")
        acc = 0.0
        n = 0
        for p in pos[in_band]:
            h = frequency_response(
                synthesize_arrivals(Position3(p[0], p[1], tx_depth), rx, env, grid.f0), grid)
            acc += float(np.sum(np.abs(h) ** 2))
            n += h.size
        power[r] = acc / n
    return power


def noise_variance(p_ref: np.ndarray, snr_db: float) -> np.ndarray:
    """Per-receiver complex noise variance sigma_r^2 = P_r / 10^(SNR/10)."""
    if math.isinf(snr_db):
        return np.zeros_like(np.asarray(p_ref, dtype=np.float64))
    return np.asarray(p_ref, dtype=np.float64) / 10.0 ** (snr_db / 10.0)


def add_noise(snapshot: ChannelSnapshot, snr_db: float, p_ref: np.ndarray,
              seed: int) -> ChannelSnapshot:
    """Add circularly-symmetric complex Gaussian noise, i.i.d. over (r, k)."""
    if snapshot.noisy:
        raise DataError("snapshot already carries noise")
    n_rx, k = snapshot.gains.shape
    sigma2 = noise_variance(p_ref, snr_db)
    if sigma2.shape != (n_rx,):
        raise ConfigError(f"reference power must have shape ({n_rx},), got {sigma2.shape}")
    if math.isinf(snr_db):
        return replace(snapshot, noisy=True)
    w = Stream(seed).complex_normal(n_rx * k).reshape(n_rx, k)
    w *= np.sqrt(sigma2)[:, None]
    return ChannelSnapshot(gains=snapshot.gains + w, noisy=True)

"""Correlated Gauss-Markov mobility and the impersonation-attack geometry.

The legitimate source moves on a horizontal plane inside a rectangular
area. Its velocity follows a per-component AR(1) process

    v(t+T) = alpha * v(t) + eta(t) * sqrt(1 - alpha^2)
    p(t+T) = p(t) + v(t) * T

with eta i.i.d. zero-mean Gaussian of per-component std sigma_v, so the
stationary per-component speed variance equals sigma_v^2. Position updates
use the pre-update velocity. Steps that would exit the area are reflected
specularly: the offending coordinate is mirrored about the boundary and
the corresponding velocity component is negated, preserving speed
statistics.

The attacker spawns on a circle of configurable radius around the
legitimate source's last position before the attack onset and then moves
under the same mobility model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, NumericalError
from .rng import Stream, derive_seed


class Area(NamedTuple):
    """Axis-aligned rectangle, in meters."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains(self, x: float, y: float, tol: float = 0.0) -> bool:
        return (self.x_min - tol <= x <= self.x_max + tol
                and self.y_min - tol <= y <= self.y_max + tol)


@dataclass(frozen=True)
class GaussMarkovParams:
    alpha: float          # trajectory correlation factor, in [0, 1]
    T: float              # sampling period, s
    sigma_v: float        # per-component speed-noise std, m/s
    v0: float             # initial speed modulus, m/s
    depth: float          # device depth, m (informational; motion is 2D)
    area: Area            # allowed transmitter area, m

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.T <= 0.0:
            raise ConfigError(f"sampling period must be positive, got {self.T}")
        if self.sigma_v < 0.0:
            raise ConfigError(f"sigma_v must be >= 0, got {self.sigma_v}")
        if self.v0 < 0.0:
            raise ConfigError(f"v0 must be >= 0, got {self.v0}")
        area = Area(*self.area)
        if not (area.x_min < area.x_max and area.y_min < area.y_max):
            raise ConfigError(f"degenerate area {area}")
        object.__setattr__(self, "area", area)


@dataclass(frozen=True)
class MobilityState:
    t: float
    p: tuple[float, float]
    v: tuple[float, float]

    @property
    def heading(self) -> float:
        return math.atan2(self.v[1], self.v[0])


@dataclass(frozen=True)
class Trajectory:
    """Equally spaced mobility samples; t increases by T per sample."""

    samples: tuple[MobilityState, ...]
    seed: int

    def __len__(self) -> int:
        return len(self.samples)

    def positions(self) -> np.ndarray:
        return np.array([s.p for s in self.samples], dtype=np.float64)

    def velocities(self) -> np.ndarray:
        return np.array([s.v for s in self.samples], dtype=np.float64)

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples], dtype=np.float64)


@dataclass(frozen=True)
class AttackScenario:
    onset_index: int                 # first sample index transmitted by Eve
    standoff: float                  # minimum spawn distance from Alice, m
    eve_v0: float                    # Eve's initial speed modulus, m/s
    eve_heading_halfwidth: float     # half-width of Eve's heading cone, rad

    def __post_init__(self):
        if self.onset_index <= 0:
            raise ConfigError(f"onset index must be positive, got {self.onset_index}")
        if self.standoff <= 0.0:
            raise ConfigError(f"standoff must be positive, got {self.standoff}")
        if self.eve_v0 < 0.0:
            raise ConfigError(f"eve_v0 must be >= 0, got {self.eve_v0}")
        if self.eve_heading_halfwidth < 0.0:
            raise ConfigError("heading half-width must be >= 0")


def _reflect(x: float, lo: float, hi: float) -> tuple[float, bool]:
    """Mirror x into [lo, hi]; True when any reflection happened."""
    flipped = False
    while x < lo or x > hi:
        if x < lo:
            x = 2.0 * lo - x
        else:
            x = 2.0 * hi - x
        flipped = not flipped
    return x, flipped


def step_gauss_markov(state: MobilityState, params: GaussMarkovParams,
                      eta: tuple[float, float]) -> MobilityState:
    """Advance one sampling period; eta is the caller-supplied noise draw."""
    alpha, T = params.alpha, params.T
    coeff = math.sqrt(max(0.0, 1.0 - alpha * alpha))
    px, py = state.p
    vx, vy = state.v
    nvx = alpha * vx + coeff * eta[0]
    nvy = alpha * vy + coeff * eta[1]
    npx = px + vx * T
    npy = py + vy * T
    area = params.area
    npx, fx = _reflect(npx, area.x_min, area.x_max)
    npy, fy = _reflect(npy, area.y_min, area.y_max)
    if fx:
        nvx = -nvx
    if fy:
        nvy = -nvy
    return MobilityState(t=state.t + T, p=(npx, npy), v=(nvx, nvy))


def _roll_forward(initial: MobilityState, params: GaussMarkovParams,
                  n_steps: int, stream: Stream) -> list[MobilityState]:
    states = [initial]
    if n_steps > 0:
        etas = params.sigma_v * stream.normal(2 * n_steps)
        s = initial
        for k in range(n_steps):
            s = step_gauss_markov(s, params, (float(etas[2 * k]), float(etas[2 * k + 1])))
            states.append(s)
    return states


def simulate_trajectory(params: GaussMarkovParams, M: int, seed: int) -> Trajectory:
    """Simulate M samples: uniform start in the area, uniform initial heading."""
    if M < 1:
        raise ConfigError(f"trajectory length must be >= 1, got {M}")
    stream = Stream(seed)
    u = stream.uniform_co(3)
    area = params.area
    x0 = area.x_min + float(u[0]) * (area.x_max - area.x_min)
    y0 = area.y_min + float(u[1]) * (area.y_max - area.y_min)
    heading = 2.0 * math.pi * float(u[2])
    v0 = (params.v0 * math.cos(heading), params.v0 * math.sin(heading))
    initial = MobilityState(t=0.0, p=(x0, y0), v=v0)
    return Trajectory(samples=tuple(_roll_forward(initial, params, M - 1, stream)), seed=seed)


def _circle_rect_distances(cx: float, cy: float, area: Area) -> tuple[float, float]:
    dx = max(area.x_min - cx, 0.0, cx - area.x_max)
    dy = max(area.y_min - cy, 0.0, cy - area.y_max)
    d_min = math.hypot(dx, dy)
    d_max = max(math.hypot(cx - x, cy - y)
                for x in (area.x_min, area.x_max)
                for y in (area.y_min, area.y_max))
    return d_min, d_max

_MAX_SPAWN_DRAWS = 100_000


def spawn_attacker(alice: Trajectory, scenario: AttackScenario,
                   params: GaussMarkovParams, seed: int) -> Trajectory:
    """Spawn Eve at the attack onset and roll her trajectory to Alice's horizon.

    Eve starts on the circle of radius `standoff` around Alice's position one
    sample before the onset, uniformly over the arc inside the area, with her
    initial heading drawn uniformly in a cone around Alice's heading there.
    Her first sample has t = onset_index * T.
    """
    ell = scenario.onset_index
    if not 0 < ell < len(alice):
        raise ConfigError(f"onset index {ell} outside trajectory of length {len(alice)}")
    anchor = alice.samples[ell - 1]
    cx, cy = anchor.p
    D = scenario.standoff
    area = params.area
    d_min, d_max = _circle_rect_distances(cx, cy, area)
    if not d_min <= D <= d_max:
        raise ConfigError(
            f"standoff circle (radius {D} around {anchor.p}) does not intersect the area")
    stream = Stream(seed)
    for _ in range(_MAX_SPAWN_DRAWS):
        theta = 2.0 * math.pi * float(stream.uniform_co(1)[0])
        ex = cx + D * math.cos(theta)
        ey = cy + D * math.sin(theta)
        if area.contains(ex, ey):
            break
    else:
        raise NumericalError("could not place the attacker inside the area")
    phi = anchor.heading
    hw = scenario.eve_heading_halfwidth
    heading = phi + hw * (2.0 * float(stream.uniform_co(1)[0]) - 1.0)
    v0 = (scenario.eve_v0 * math.cos(heading), scenario.eve_v0 * math.sin(heading))
    initial = MobilityState(t=ell * params.T, p=(ex, ey), v=v0)
    n_steps = len(alice) - ell - 1
    return Trajectory(samples=tuple(_roll_forward(initial, params, n_steps, stream)), seed=seed)


def compose_attack_trace(alice: Trajectory, eve: Trajectory,
                         onset: int) -> tuple[Trajectory, np.ndarray]:
    """Splice Alice's samples before the onset with Eve's from the onset on.

    Returns the composed trajectory and per-sample ground-truth labels
    (0 legitimate, 1 attack), monotone by construction.
    """
    M = len(alice)
    if not 0 < onset <= M:
        raise ConfigError(f"onset {onset} out of range for length {M}")
    if onset < M and len(eve) < M - onset:
        raise ConfigError(f"attacker trajectory too short: {len(eve)} < {M - onset}")
    samples = list(alice.samples[:onset]) + list(eve.samples[:M - onset])
    labels = np.zeros(M, dtype=np.int64)
    labels[onset:] = 1
    return Trajectory(samples=tuple(samples), seed=alice.seed), labels


def attack_trace(params: GaussMarkovParams, scenario: AttackScenario, M: int,
                 seed: int) -> tuple[Trajectory, np.ndarray]:
    """Convenience composition: simulate Alice, spawn Eve, splice at onset."""
    alice = simulate_trajectory(params, M, derive_seed(seed, 0))
    eve = spawn_attacker(alice, scenario, params, derive_seed(seed, 1))
    return compose_attack_trace(alice, eve, scenario.onset_index)

"""
Ground-truth trajectories and synthetic IMU / GNSS streams.

Profiles are analytic in a local flat NED frame anchored at the profile origin,
with a level vehicle whose yaw follows the direction of travel. IMU samples
are synthesized by inverting the strapdown equations at the midpoint of each
sample interval, which is what an integrating sensor reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy.special import jv

from .geodesy import WGS84, EarthParams, GeodeticPosition, radii_of_curvature
from .gnss_accel import GnssFix
from .strapdown import ImuSample, NavState

PROFILE_KINDS = ("straight", "figure-eight", "racetrack", "stop-and-go")

# first zero of J0; with this heading amplitude the figure-eight closes every period
FIG8_HEADING_AMPLITUDE = 2.404825557695773
_BESSEL_TERMS = 30


class Kinematics(NamedTuple):
    """Local-frame kinematics sampled at times ``t`` (arrays, leading axis = time)."""

    t: NDArray[np.float64]
    ned: NDArray[np.float64]
    vel: NDArray[np.float64]
    acc: NDArray[np.float64]
    yaw: NDArray[np.float64]
    yaw_rate: NDArray[np.float64]


@dataclass(frozen=True)
class TrajectoryProfile:
    """
    Parametrized ground-vehicle trajectory.

    ``period`` is the figure-eight loop time; ``turn_radius`` and
    ``straight_length`` shape the racetrack; the ``ramp_time``/``cruise_time``/
    ``stop_time`` triplet and ``grade`` (climb per meter travelled) shape
    stop-and-go.
    """

    kind: str = "figure-eight"
    speed: float = 5.0
    duration: float = 300.0
    origin: GeodeticPosition = GeodeticPosition(math.radians(32.8), math.radians(35.0), 50.0)
    heading: float = 0.0
    period: float = 60.0
    turn_radius: float = 20.0
    straight_length: float = 100.0
    ramp_time: float = 4.0
    cruise_time: float = 10.0
    stop_time: float = 5.0
    grade: float = 0.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; choose from {PROFILE_KINDS}")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.speed >= 0:
            raise ValueError("speed must be non-negative")
        object.__setattr__(self, "origin", GeodeticPosition(*self.origin).validate())

    @property
    def max_curvature(self) -> float:
        if self.kind == "figure-eight":
            return FIG8_HEADING_AMPLITUDE * 2.0 * math.pi / (self.speed * self.period)
        if self.kind == "racetrack":
            return 1.0 / self.turn_radius
        return 0.0

    def evaluate(self, t) -> Kinematics:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return _EVALUATORS[self.kind](self, t)


def _planar(t, p, heading, speed, yaw_rate, along_acc):
    c, s = np.cos(heading), np.sin(heading)
    vel = np.column_stack([speed * c, speed * s, np.zeros_like(t)])
    acc = np.column_stack(
        [along_acc * c - speed * yaw_rate * s, along_acc * s + speed * yaw_rate * c, np.zeros_like(t)]
    )
    return Kinematics(t, p, vel, acc, heading, yaw_rate)


def _straight(prof, t):
    heading = np.full_like(t, prof.heading)
    d = prof.speed * t
    p = np.column_stack([d * math.cos(prof.heading), d * math.sin(prof.heading), np.zeros_like(t)])
    zero = np.zeros_like(t)
    return _planar(t, p, heading, prof.speed, zero, zero)


def _figure_eight(prof, t):
    A = FIG8_HEADING_AMPLITUDE
    omega = 2.0 * math.pi / prof.period
    u = omega * t
    heading = prof.heading + A * np.sin(u)
    yaw_rate = A * omega * np.cos(u)
    # integrals of cos(A sin u) and sin(A sin u) from 0 to u (Jacobi-Anger)
    int_c = jv(0, A) * u
    int_s = np.zeros_like(u)
    for k in range(1, _BESSEL_TERMS):
        int_c += 2.0 * jv(2 * k, A) * np.sin(2 * k * u) / (2 * k)
        n = 2 * k - 1
        int_s += 2.0 * jv(n, A) * (1.0 - np.cos(n * u)) / n
    scale = prof.speed / omega
    c0, s0 = math.cos(prof.heading), math.sin(prof.heading)
    p = np.column_stack(
        [scale * (c0 * int_c - s0 * int_s), scale * (s0 * int_c + c0 * int_s), np.zeros_like(t)]
    )
    return _planar(t, p, heading, prof.speed, yaw_rate, np.zeros_like(t))


def _racetrack(prof, t):
    L, r, v = prof.straight_length, prof.turn_radius, prof.speed
    arc = math.pi * r
    lap = 2.0 * (L + arc)
    s = np.mod(v * t, lap)
    x = np.empty_like(s)
    y = np.empty_like(s)
    yaw = np.empty_like(s)
    rate = np.zeros_like(s)

    seg1 = s < L
    seg2 = (s >= L) & (s < L + arc)
    seg3 = (s >= L + arc) & (s < 2 * L + arc)
    seg4 = s >= 2 * L + arc

    x[seg1], y[seg1], yaw[seg1] = s[seg1], 0.0, 0.0
    a = (s[seg2] - L) / r
    x[seg2], y[seg2], yaw[seg2] = L + r * np.sin(a), r - r * np.cos(a), a
    rate[seg2] = v / r
    d = s[seg3] - L - arc
    x[seg3], y[seg3], yaw[seg3] = L - d, 2 * r, math.pi
    a = (s[seg4] - 2 * L - arc) / r
    x[seg4], y[seg4], yaw[seg4] = -r * np.sin(a), r + r * np.cos(a), math.pi + a
    rate[seg4] = v / r

    c0, s0 = math.cos(prof.heading), math.sin(prof.heading)
    p = np.column_stack([c0 * x - s0 * y, s0 * x + c0 * y, np.zeros_like(s)])
    return _planar(t, p, yaw + prof.heading, v, rate, np.zeros_like(s))


def _stop_and_go(prof, t):
    V, Tr, Tc, Ts = prof.speed, prof.ramp_time, prof.cruise_time, prof.stop_time
    cycle = 2 * Tr + Tc + Ts
    per_cycle = V * (Tr + Tc)
    n = np.floor(t / cycle)
    tau = t - n * cycle
    dist = n * per_cycle
    speed = np.zeros_like(t)
    acc = np.zeros_like(t)

    up = tau < Tr
    w = math.pi / Tr
    speed[up] = 0.5 * V * (1.0 - np.cos(w * tau[up]))
    acc[up] = 0.5 * V * w * np.sin(w * tau[up])
    dist[up] += 0.5 * V * (tau[up] - np.sin(w * tau[up]) / w)

    cruise = (tau >= Tr) & (tau < Tr + Tc)
    speed[cruise] = V
    dist[cruise] += 0.5 * V * Tr + V * (tau[cruise] - Tr)

    down = (tau >= Tr + Tc) & (tau < 2 * Tr + Tc)
    td = tau[down] - Tr - Tc
    speed[down] = 0.5 * V * (1.0 + np.cos(w * td))
    acc[down] = -0.5 * V * w * np.sin(w * td)
    dist[down] += 0.5 * V * Tr + V * Tc + 0.5 * V * (td + np.sin(w * td) / w)

    stopped = tau >= 2 * Tr + Tc
    dist[stopped] += per_cycle

    c0, s0 = math.cos(prof.heading), math.sin(prof.heading)
    direction = np.array([c0, s0, -prof.grade])
    zero = np.zeros_like(t)
    return Kinematics(
        t,
        dist[:, None] * direction,
        speed[:, None] * direction,
        acc[:, None] * direction,
        np.full_like(t, prof.heading),
        zero,
    )


_EVALUATORS = {
    "straight": _straight,
    "figure-eight": _figure_eight,
    "racetrack": _racetrack,
    "stop-and-go": _stop_and_go,
}


def _to_geodetic(origin, ned, earth):
    lat0, lon0, h0 = origin
    r_m, r_n = radii_of_curvature(lat0, earth)
    lat = lat0 + ned[:, 0] / (r_m + h0)
    lon = lon0 + ned[:, 1] / ((r_n + h0) * math.cos(lat0))
    lon = np.remainder(lon + math.pi, 2.0 * math.pi) - math.pi
    return np.column_stack([lat, lon, h0 - ned[:, 2]])


def _level_dcm(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    R = np.zeros((len(yaw), 3, 3))
    R[:, 0, 0], R[:, 0, 1] = c, -s
    R[:, 1, 0], R[:, 1, 1] = s, c
    R[:, 2, 2] = 1.0
    return R


@dataclass
class Truth:
    """Truth time series: geodetic position, NED velocity/acceleration, attitude."""

    profile: TrajectoryProfile
    t: NDArray[np.float64]
    llh: NDArray[np.float64]
    vel: NDArray[np.float64]
    acc: NDArray[np.float64]
    attitude: NDArray[np.float64]
    earth: EarthParams = field(default=WGS84, repr=False)

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> NavState:
        return NavState(GeodeticPosition(*self.llh[i]), self.vel[i], self.attitude[i], self.t[i])

    def __iter__(self):
        for i in range(len(self.t)):
            yield self.t[i], self.state(i), self.acc[i]


def sample_truth(profile: TrajectoryProfile, t, earth: EarthParams = WGS84) -> Truth:
    kin = profile.evaluate(t)
    return Truth(
        profile, kin.t, _to_geodetic(profile.origin, kin.ned, earth), kin.vel, kin.acc,
        _level_dcm(kin.yaw), earth,
    )


def generate_truth(profile: TrajectoryProfile, rate: float, earth: EarthParams = WGS84) -> Truth:
    """Sample the profile at ``rate`` Hz from 0 to ``duration`` inclusive."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    n = int(math.floor(profile.duration * rate + 1e-9))
    return sample_truth(profile, np.arange(n + 1) / rate, earth)


def _ideal_imu(profile, t, earth):
    kin = profile.evaluate(t)
    llh = _to_geodetic(profile.origin, kin.ned, earth)
    R = _level_dcm(kin.yaw)
    lat, h = llh[:, 0], llh[:, 2]
    s, c = np.sin(lat), np.cos(lat)
    den = 1.0 - earth.ecc2 * s * s
    r_n = earth.semi_major_axis / np.sqrt(den) + h
    r_m = earth.semi_major_axis * (1.0 - earth.ecc2) / den**1.5 + h
    g = np.zeros_like(kin.vel)
    g[:, 2] = earth.gravity_equator * (1.0 + earth.gravity_k * s * s) / np.sqrt(den)
    g[:, 2] -= earth.free_air_gradient * h
    w_ie = earth.rotation_rate * np.column_stack([c, np.zeros_like(c), -s])
    vn, ve = kin.vel[:, 0], kin.vel[:, 1]
    w_en = np.column_stack([ve / r_n, -vn / r_m, -ve * np.tan(lat) / r_n])
    f_nav = kin.acc - g + np.cross(2.0 * w_ie + w_en, kin.vel)
    f = np.einsum("kji,kj->ki", R, f_nav)
    w = np.einsum("kji,kj->ki", R, w_ie + w_en)
    w[:, 2] += kin.yaw_rate
    return f, w


@dataclass(frozen=True)
class ImuErrorModel:
    """Constant biases plus white noise (densities per sqrt(Hz))."""

    accel_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gyro_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    accel_noise: float = 0.0
    gyro_noise: float = 0.0
    rate: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("IMU rate must be positive")
        if self.accel_noise < 0 or self.gyro_noise < 0:
            raise ValueError("noise densities must be non-negative")


@dataclass(frozen=True)
class GnssErrorModel:
    sigma: tuple[float, float, float] = (1.5, 1.5, 1.5)
    rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), (3,))
        if not np.all(sigma >= 0) or not self.rate > 0:
            raise ValueError("GNSS sigma must be >= 0 and rate > 0")
        object.__setattr__(self, "sigma", tuple(float(s) for s in sigma))


class ImuStream(NamedTuple):
    t: NDArray[np.float64]
    specific_force: NDArray[np.float64]
    angular_rate: NDArray[np.float64]

    def samples(self) -> list[ImuSample]:
        return [
            ImuSample(t, f, w) for t, f, w in zip(self.t, self.specific_force, self.angular_rate)
        ]


def synthesize_imu(truth: Truth, model: ImuErrorModel) -> ImuStream:
    """
    IMU samples over the truth time span at ``model.rate``.

    Sample ``k`` is stamped ``k / rate`` and describes the interval ending
    there; its ideal value is taken at the interval midpoint.
    """
    prof, earth = truth.profile, truth.earth
    dt = 1.0 / model.rate
    n = int(math.floor((truth.t[-1] - truth.t[0]) * model.rate + 1e-9))
    t = truth.t[0] + np.arange(1, n + 1) * dt
    f, w = _ideal_imu(prof, t - 0.5 * dt, earth)
    rng = np.random.default_rng(model.seed)
    root_rate = math.sqrt(model.rate)
    f = f + np.asarray(model.accel_bias) + model.accel_noise * root_rate * rng.standard_normal((n, 3))
    w = w + np.asarray(model.gyro_bias) + model.gyro_noise * root_rate * rng.standard_normal((n, 3))
    return ImuStream(t, f, w)


class GnssStream(NamedTuple):
    t: NDArray[np.float64]
    llh: NDArray[np.float64]
    sigma: NDArray[np.float64]

    def fixes(self) -> list[GnssFix]:
        return [GnssFix(t, GeodeticPosition(*p), s) for t, p, s in zip(self.t, self.llh, self.sigma)]


def synthesize_gnss(truth: Truth, model: GnssErrorModel) -> GnssStream:
    """Fixes at ``model.rate`` with independent Gaussian NED errors."""
    prof, earth = truth.profile, truth.earth
    n = int(math.floor((truth.t[-1] - truth.t[0]) * model.rate + 1e-9))
    t = truth.t[0] + np.arange(n + 1) / model.rate
    kin = prof.evaluate(t)
    sigma = np.asarray(model.sigma)
    rng = np.random.default_rng(model.seed)
    noisy = kin.ned + sigma * rng.standard_normal((n + 1, 3))
    return GnssStream(t, _to_geodetic(prof.origin, noisy, earth), np.tile(sigma, (n + 1, 1)))


def spawn_seeds(seed: int, n: int = 3) -> list[int]:
    """Independent child seeds from one 64-bit seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]

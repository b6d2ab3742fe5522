"""Strapdown mechanization in the local-level NED frame."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .errors import DomainError
from .geodesy import (
    WGS84,
    EarthParams,
    GeodeticPosition,
    check_rotation,
    earth_rate_ned,
    gravity_ned,
    orthonormalize,
    radii_of_curvature,
    skew,
    so3_exp,
    transport_rate_ned,
    wrap_longitude,
)

MAX_DT = 0.1


class ImuSample(NamedTuple):
    """
    One IMU output.

    ``specific_force`` [m/s^2] and ``angular_rate`` [rad/s] are body-frame
    values held constant over the interval ending at ``t``.
    """

    t: float
    specific_force: NDArray[np.float64]
    angular_rate: NDArray[np.float64]


@dataclass
class NavState:
    """Full navigation solution plus the filter's running IMU bias estimates."""

    position: GeodeticPosition
    velocity: NDArray[np.float64]
    attitude: NDArray[np.float64]
    timestamp: float = 0.0
    accel_bias: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    gyro_bias: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = GeodeticPosition(*map(float, self.position))
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.attitude = np.asarray(self.attitude, dtype=float)
        self.accel_bias = np.asarray(self.accel_bias, dtype=float)
        self.gyro_bias = np.asarray(self.gyro_bias, dtype=float)

    def copy(self) -> "NavState":
        return replace(
            self,
            velocity=self.velocity.copy(),
            attitude=self.attitude.copy(),
            accel_bias=self.accel_bias.copy(),
            gyro_bias=self.gyro_bias.copy(),
        )


class NavRates(NamedTuple):
    """Frame rates and gravity evaluated at the start of a step."""

    gravity: NDArray[np.float64]
    earth_rate: NDArray[np.float64]
    transport_rate: NDArray[np.float64]
    r_meridian: float
    r_normal: float


def nav_rates(state: NavState, earth: EarthParams = WGS84) -> NavRates:
    lat, _, h = state.position
    r_m, r_n = radii_of_curvature(lat, earth)
    return NavRates(
        gravity_ned(lat, h, earth),
        earth_rate_ned(lat, earth),
        transport_rate_ned(state.velocity, state.position, earth),
        r_m,
        r_n,
    )


def integrate_attitude(
    R: ArrayLike, omega_body: ArrayLike, omega_nav: ArrayLike, dt: float
) -> NDArray[np.float64]:
    """
    Advance a body-to-NED rotation by one step.

    ``omega_body`` is the body rate relative to inertial space, ``omega_nav``
    the rotation rate of the navigation frame (Earth plus transport rate).
    Both increments use the exact exponential map for rates held constant over
    ``dt``.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    return _attitude_step(np.asarray(R, dtype=float), omega_body, omega_nav, dt)


def _attitude_step(R, omega_body, omega_nav, dt):
    body = so3_exp(np.asarray(omega_body, dtype=float) * dt)
    nav = so3_exp(-np.asarray(omega_nav, dtype=float) * dt)
    return orthonormalize(nav @ R @ body)


def _integrate(
    state: NavState,
    f_body: NDArray[np.float64],
    w_body: NDArray[np.float64],
    rates: NavRates,
    dt: float,
) -> NavState:
    # Rates are frozen at the step start; dt may be negative here.
    R0 = state.attitude
    v0 = state.velocity
    w_in = rates.earth_rate + rates.transport_rate
    R1 = _attitude_step(R0, w_body, w_in, dt)
    # mean attitude over the step integrates a body-fixed force exactly to 2nd order
    a = 0.5 * (R0 + R1) @ f_body + rates.gravity
    # trapezoidal Coriolis term: exactly reversible for frozen rates
    c = 2.0 * rates.earth_rate + rates.transport_rate
    M = np.eye(3) + 0.5 * dt * skew(c)
    v1 = np.linalg.solve(M, v0 + dt * a - 0.5 * dt * np.cross(c, v0))
    vn, ve, vd = 0.5 * (v0 + v1)
    lat, lon, h = state.position
    h_mid = h - 0.5 * dt * vd
    dlat = dt * vn / (rates.r_meridian + h_mid)
    lat1 = lat + dlat
    lon1 = wrap_longitude(lon + dt * ve / ((rates.r_normal + h_mid) * math.cos(lat + 0.5 * dlat)))
    h1 = h - dt * vd
    return NavState(
        GeodeticPosition(lat1, lon1, h1),
        v1,
        R1,
        state.timestamp + dt,
        state.accel_bias,
        state.gyro_bias,
    )


def propagate(
    state: NavState, imu: ImuSample, dt: float, earth: EarthParams = WGS84
) -> NavState:
    """
    Advance the navigation state by ``dt`` seconds.

    The IMU values must already be bias-corrected. Velocity follows the NED
    velocity equation with Coriolis and transport terms, position follows the
    geodetic rate equations with the step-averaged velocity, and the attitude
    uses exponential-map increments.

    Parameters
    ----------
    state : NavState
        State at the start of the interval.
    imu : ImuSample
        Specific force and angular rate, constant over the interval.
    dt : float
        Step length in seconds, ``0 < dt <= 0.1``.

    Returns
    -------
    NavState
        State at ``state.timestamp + dt``.
    """
    if not 0.0 < dt <= MAX_DT:
        raise DomainError(f"dt must be in (0, {MAX_DT}], got {dt}")
    check_rotation(state.attitude)
    p1, v1, R1 = _kernels.nav_step(
        np.array(state.position),
        np.asarray(state.velocity, dtype=float),
        state.attitude,
        np.asarray(imu.specific_force, dtype=float),
        np.asarray(imu.angular_rate, dtype=float),
        dt,
        earth.kernel_vector(),
    )
    return NavState(
        GeodeticPosition(*p1), v1, R1, state.timestamp + dt, state.accel_bias, state.gyro_bias
    )

"""
15-state error-state EKF for a loosely coupled INS/GNSS filter.

Error-state layout (index slices below)::

    [ dp (NED m) | dv (NED m/s) | phi (rad) | dba (m/s^2) | dbg (rad/s) ]

Sign conventions: position, velocity and bias errors are *estimate minus
truth*. The misalignment ``phi`` is a body-side perturbation with
``R_true = R_est @ (I + skew(phi))``. With these choices the acceleration
measurement Jacobian is exactly ``[0, 0, R skew(f), -R, 0]`` and equals the
``phi``/``ba`` columns of the velocity row of ``F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import CovarianceError, DomainError, SingularInnovationError, SmallAngleError
from .geodesy import (
    WGS84,
    EarthParams,
    GeodeticPosition,
    check_rotation,
    local_ned_to_llh,
    orthonormalize,
    skew,
    so3_exp,
)
from . import _kernels
from .strapdown import MAX_DT, ImuSample, NavState, nav_rates

N_STATES = 15
N_NOISE = 12
POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 9)
BA = slice(9, 12)
BG = slice(12, 15)

MAX_INJECT_ANGLE = 0.5
MAX_INNOVATION_COND = 1e12


@dataclass(frozen=True)
class ProcessNoiseParams:
    """
    White-noise spectral densities driving the error model.

    Attributes
    ----------
    accel_noise : array-like
        Accelerometer white noise, m/s^2/sqrt(Hz).
    gyro_noise : array-like
        Gyro white noise, rad/s/sqrt(Hz).
    accel_bias_walk : array-like
        Accelerometer bias random walk, m/s^3/sqrt(Hz).
    gyro_bias_walk : array-like
        Gyro bias random walk, rad/s^2/sqrt(Hz).
    """

    accel_noise: tuple[float, float, float] = (0.01, 0.01, 0.01)
    gyro_noise: tuple[float, float, float] = (1e-4, 1e-4, 1e-4)
    accel_bias_walk: tuple[float, float, float] = (1e-4, 1e-4, 1e-4)
    gyro_bias_walk: tuple[float, float, float] = (1e-6, 1e-6, 1e-6)

    def __post_init__(self):
        for name in ("accel_noise", "gyro_noise", "accel_bias_walk", "gyro_bias_walk"):
            value = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (3,))
            if np.any(value < 0) or not np.all(np.isfinite(value)):
                raise ValueError(f"{name} must be finite and non-negative")
            object.__setattr__(self, name, tuple(float(x) for x in value))

    def spectral_diag(self) -> NDArray[np.float64]:
        return np.square(
            np.concatenate(
                [self.accel_noise, self.gyro_noise, self.accel_bias_walk, self.gyro_bias_walk]
            )
        )


@dataclass(frozen=True)
class Measurement:
    """Residual (prediction minus measurement), Jacobian and noise covariance."""

    residual: NDArray[np.float64]
    H: NDArray[np.float64]
    R: NDArray[np.float64]

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.residual, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        k = z.shape[0]
        if H.shape != (k, N_STATES) or R.shape != (k, k):
            raise ValueError(
                f"inconsistent measurement shapes z{z.shape} H{H.shape} R{R.shape}"
            )
        object.__setattr__(self, "residual", z)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)

    @property
    def dim(self) -> int:
        return self.residual.shape[0]


def _rate_jacobians(state: NavState, r_m: float, r_n: float, earth: EarthParams):
    """Partials of Earth and transport rate w.r.t. NED-meter position and velocity."""
    lat, _, h = state.position
    vn, ve, _ = state.velocity
    w = earth.rotation_rate
    rm, rn = r_m + h, r_n + h
    tan_l = math.tan(lat)
    sec2 = 1.0 + tan_l * tan_l

    d_ie_p = np.zeros((3, 3))
    d_ie_p[:, 0] = np.array([-w * math.sin(lat), 0.0, -w * math.cos(lat)]) / rm

    d_en_p = np.zeros((3, 3))
    d_en_p[2, 0] = -ve * sec2 / (rn * rm)
    # column for dp_down = -dh
    d_en_p[:, 2] = [ve / rn**2, -vn / rm**2, -ve * tan_l / rn**2]

    d_en_v = np.array([[0.0, 1.0 / rn, 0.0], [-1.0 / rm, 0.0, 0.0], [0.0, -tan_l / rn, 0.0]])
    return d_ie_p, d_en_p, d_en_v


def build_F(
    state: NavState,
    f_body: ArrayLike,
    omega_body: ArrayLike | None = None,
    earth: EarthParams = WGS84,
) -> NDArray[np.float64]:
    """
    Continuous-time error dynamics matrix.

    Parameters
    ----------
    state : NavState
        Current estimate (linearization point).
    f_body : array-like
        Bias-corrected specific force in body frame.
    omega_body : array-like, optional
        Bias-corrected body angular rate; drives the misalignment self-coupling.
        Defaults to zero.
    """
    f_body = np.asarray(f_body, dtype=float)
    w_ib = np.zeros(3) if omega_body is None else np.asarray(omega_body, dtype=float)
    R = state.attitude
    rates = nav_rates(state, earth)
    lat, _, h = state.position
    vn, ve, vd = state.velocity
    rm, rn = rates.r_meridian + h, rates.r_normal + h
    tan_l = math.tan(lat)
    d_ie_p, d_en_p, d_en_v = _rate_jacobians(state, rates.r_meridian, rates.r_normal, earth)

    F = np.zeros((N_STATES, N_STATES))

    F[POS, POS] = [
        [-vd / rm, 0.0, vn / rm],
        [ve * tan_l / rm, -vd / rn - vn * tan_l / rm, ve / rn],
        [0.0, 0.0, 0.0],
    ]
    F[POS, VEL] = np.eye(3)

    v_x = skew(state.velocity)
    g = rates.gravity[2]
    F[VEL, POS] = v_x @ (2.0 * d_ie_p + d_en_p)
    F[5, 2] += 2.0 * g / math.sqrt(rates.r_meridian * rates.r_normal)
    F[VEL, VEL] = -skew(2.0 * rates.earth_rate + rates.transport_rate) + v_x @ d_en_v
    F[VEL, ATT] = R @ skew(f_body)
    F[VEL, BA] = -R

    F[ATT, POS] = R.T @ (d_ie_p + d_en_p)
    F[ATT, VEL] = R.T @ d_en_v
    F[ATT, ATT] = -skew(w_ib)
    F[ATT, BG] = np.eye(3)
    return F


def build_G(state: NavState) -> NDArray[np.float64]:
    """Noise shaping matrix mapping ``[w_a, w_g, w_ba, w_bg]`` into the error state."""
    G = np.zeros((N_STATES, N_NOISE))
    G[VEL, 0:3] = state.attitude
    G[ATT, 3:6] = np.eye(3)  # gyro noise enters a body-side misalignment directly
    G[BA, 6:9] = np.eye(3)
    G[BG, 9:12] = np.eye(3)
    return G


def discretize(F: ArrayLike, dt: float) -> NDArray[np.float64]:
    """First-order transition matrix ``I + F dt``."""
    return np.eye(N_STATES) + np.asarray(F) * dt


def build_Q(G: ArrayLike, params: ProcessNoiseParams, dt: float) -> NDArray[np.float64]:
    """Discrete process noise ``G W G^T dt``."""
    G = np.asarray(G)
    Q = (G * params.spectral_diag()) @ G.T * dt
    return 0.5 * (Q + Q.T)


def _symmetrize(P):
    return 0.5 * (P + P.T)


def check_psd(P: NDArray[np.float64], rel_tol: float = 1e-9) -> None:
    """Raise ``CovarianceError`` if ``P`` has an eigenvalue below ``-rel_tol*trace``."""
    if not np.all(np.isfinite(P)):
        raise CovarianceError("covariance has non-finite entries")
    tr = np.trace(P)
    if np.linalg.eigvalsh(P).min() < -rel_tol * max(tr, 0.0):
        raise CovarianceError("covariance is not positive semi-definite")


def predict(
    P: ArrayLike, Phi: ArrayLike, Q: ArrayLike, full_check: bool = False
) -> NDArray[np.float64]:
    """
    Covariance time update ``Phi P Phi^T + Q``, symmetrized.

    A negative or non-finite diagonal always raises; ``full_check`` adds an
    eigenvalue test.
    """
    Phi = np.asarray(Phi)
    P_minus = _symmetrize(Phi @ np.asarray(P) @ Phi.T + np.asarray(Q))
    d = np.diag(P_minus)
    if not np.all(np.isfinite(d)) or d.min() < -1e-9 * max(d.sum(), 0.0):
        raise CovarianceError("predicted covariance lost positive semi-definiteness")
    if full_check:
        check_psd(P_minus)
    return P_minus


def update(
    P_minus: ArrayLike, meas: Measurement
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """
    Kalman measurement update.

    Returns
    -------
    dx : ndarray, shape (15,)
        Error-state estimate ``K @ residual``.
    P_plus : ndarray, shape (15, 15)
        Updated covariance ``(I - K H) P_minus``, symmetrized.
    K : ndarray, shape (15, k)
        Kalman gain.

    Raises
    ------
    SingularInnovationError
        If the innovation covariance has condition number above 1e12.
    """
    P_minus = np.asarray(P_minus, dtype=float)
    H, R = meas.H, meas.R
    PHt = P_minus @ H.T
    S = _symmetrize(H @ PHt + R)
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > MAX_INNOVATION_COND:
        raise SingularInnovationError("innovation covariance is singular")
    K = np.linalg.solve(S, PHt.T).T
    dx = K @ meas.residual
    P_plus = _symmetrize((np.eye(N_STATES) - K @ H) @ P_minus)
    return dx, P_plus, K


def inject_and_reset(state: NavState, dx: ArrayLike) -> NavState:
    """
    Apply an error-state estimate to the navigation state (closed loop).

    The returned state carries the corrected bias estimates; the caller treats
    the error state as zero afterwards.
    """
    dx = np.asarray(dx, dtype=float)
    phi = dx[ATT]
    if not np.linalg.norm(phi) < MAX_INJECT_ANGLE:
        raise SmallAngleError(f"misalignment correction {phi} exceeds small-angle bound")
    return NavState(
        local_ned_to_llh(state.position, -dx[POS]),
        state.velocity - dx[VEL],
        orthonormalize(state.attitude @ so3_exp(phi)),
        state.timestamp,
        state.accel_bias - dx[BA],
        state.gyro_bias - dx[BG],
    )


class ErrorStateEKF:
    """
    Closed-loop error-state filter around a strapdown navigation state.

    One instance is single-owner mutable state: call :meth:`propagate` and
    :meth:`correct` in timestamp order.
    """

    def __init__(
        self,
        state: NavState,
        P0: ArrayLike,
        noise: ProcessNoiseParams,
        earth: EarthParams = WGS84,
    ):
        self.state = state
        self.P = _symmetrize(np.array(P0, dtype=float))
        if self.P.shape != (N_STATES, N_STATES):
            raise ValueError("P0 must be 15x15")
        self.noise = noise
        self.earth = earth
        self.last_f: NDArray[np.float64] | None = None
        self.last_omega: NDArray[np.float64] | None = None
        self._w = noise.spectral_diag()
        self._earth = earth.kernel_vector()

    def corrected_imu(self, imu: ImuSample) -> tuple[NDArray, NDArray]:
        f = np.asarray(imu.specific_force, dtype=float) - self.state.accel_bias
        w = np.asarray(imu.angular_rate, dtype=float) - self.state.gyro_bias
        return f, w

    def propagate(self, imu: ImuSample, dt: float) -> None:
        """Mechanize one IMU sample and propagate the covariance."""
        if not 0.0 < dt <= MAX_DT:
            raise DomainError(f"dt must be in (0, {MAX_DT}], got {dt}")
        state = self.state
        check_rotation(state.attitude)
        f, w = self.corrected_imu(imu)
        pos = np.array(state.position)
        self.P = _kernels.covariance_step(
            self.P, pos, state.velocity, state.attitude, f, w, dt, self._earth, self._w
        )
        d = np.diag(self.P)
        if not np.all(np.isfinite(d)) or d.min() < -1e-9 * max(d.sum(), 0.0):
            raise CovarianceError("predicted covariance lost positive semi-definiteness")
        p1, v1, R1 = _kernels.nav_step(
            pos, state.velocity, state.attitude, f, w, dt, self._earth
        )
        self.state = NavState(
            GeodeticPosition(*p1), v1, R1, state.timestamp + dt,
            state.accel_bias, state.gyro_bias,
        )
        self.last_f, self.last_omega = f, w

    def propagate_many(
        self, times: NDArray[np.float64], f_raw: NDArray[np.float64], w_raw: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """
        Propagate through consecutive IMU samples given as arrays.

        ``times`` holds the sample timestamps; the first step runs from the
        current state timestamp. Bias estimates are held fixed over the block.
        Returns the geodetic position after every step.
        """
        if len(times) == 0:
            return np.empty((0, 3))
        state = self.state
        dts = np.diff(np.concatenate([[state.timestamp], times]))
        if not (np.all(dts > 0.0) and np.all(dts <= MAX_DT)):
            raise DomainError(f"IMU steps must be in (0, {MAX_DT}] s")
        check_rotation(state.attitude)
        pos, vel, R, self.P, hist = _kernels.propagate_block(
            np.array(state.position), state.velocity, state.attitude, self.P,
            np.ascontiguousarray(f_raw, dtype=float), np.ascontiguousarray(w_raw, dtype=float),
            dts, state.accel_bias, state.gyro_bias, self._earth, self._w,
        )
        d = np.diag(self.P)
        if not np.all(np.isfinite(d)) or d.min() < -1e-9 * max(d.sum(), 0.0):
            raise CovarianceError("predicted covariance lost positive semi-definiteness")
        self.state = NavState(
            GeodeticPosition(*pos), vel, R, float(times[-1]), state.accel_bias, state.gyro_bias
        )
        self.last_f = f_raw[-1] - state.accel_bias
        self.last_omega = w_raw[-1] - state.gyro_bias
        return hist

    def correct(self, meas: Measurement) -> NDArray[np.float64]:
        """Run a measurement update and inject the result. Returns ``dx``."""
        dx, self.P, _ = update(self.P, meas)
        self.state = inject_and_reset(self.state, dx)
        return dx

"""Position and GNSS-acceleration measurement models for the error-state filter."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import block_diag

from .ekf import ATT, BA, N_STATES, POS, Measurement
from .geodesy import WGS84, EarthParams, gravity_ned, llh_to_local_ned, skew
from .gnss_accel import AccelEstimate, GnssFix
from .strapdown import NavState

H_POSITION = np.zeros((3, N_STATES))
H_POSITION[:, POS] = np.eye(3)
H_POSITION.flags.writeable = False


def predict_accel_ned(
    state: NavState, f_body: ArrayLike, earth: EarthParams = WGS84
) -> NDArray[np.float64]:
    """Navigation-frame acceleration implied by the specific force and gravity."""
    lat, _, h = state.position
    return state.attitude @ np.asarray(f_body, dtype=float) + gravity_ned(lat, h, earth)


def accel_jacobian(state: NavState, f_body: ArrayLike) -> NDArray[np.float64]:
    """``[0, 0, R skew(f), -R, 0]``."""
    R = state.attitude
    H = np.zeros((3, N_STATES))
    H[:, ATT] = R @ skew(f_body)
    H[:, BA] = -R
    return H


def accel_residual(
    state: NavState,
    f_body: ArrayLike,
    est: AccelEstimate,
    noise_scale: float = 1.0,
    earth: EarthParams = WGS84,
) -> Measurement:
    """
    Predicted minus GNSS-derived acceleration.

    ``f_body`` is the bias-corrected specific force at the update epoch.
    ``noise_scale`` multiplies the estimate's covariance.
    """
    dz = predict_accel_ned(state, f_body, earth) - est.accel
    return Measurement(dz, accel_jacobian(state, f_body), noise_scale * est.noise_cov)


def position_residual(
    state: NavState, fix: GnssFix, noise_scale: float = 1.0, earth: EarthParams = WGS84
) -> Measurement:
    """Estimated minus measured position, in NED meters about the fix."""
    dz = llh_to_local_ned(fix.position, state.position, earth)
    sigma = np.broadcast_to(np.asarray(fix.sigma, dtype=float), (3,))
    return Measurement(dz, H_POSITION, noise_scale * np.diag(sigma**2))


def stack(meas_list: Sequence[Measurement]) -> Measurement:
    """Stack measurements; noise is block diagonal (cross-correlation ignored)."""
    if not meas_list:
        raise ValueError("cannot stack an empty measurement list")
    if len(meas_list) == 1:
        return meas_list[0]
    return Measurement(
        np.concatenate([m.residual for m in meas_list]),
        np.vstack([m.H for m in meas_list]),
        block_diag(*[m.R for m in meas_list]),
    )

"""Acceleration from a sliding window of GNSS fixes by quadratic least squares."""

from __future__ import annotations

from collections import deque
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import WindowError
from .geodesy import GeodeticPosition, llh_to_local_ned

MIN_FIXES = 3


class GnssFix(NamedTuple):
    """GNSS position fix with per-axis (N, E, D) standard deviation in meters."""

    t: float
    position: GeodeticPosition
    sigma: NDArray[np.float64]


class AccelEstimate(NamedTuple):
    accel: NDArray[np.float64]
    noise_cov: NDArray[np.float64]
    t: float


def design_matrix(times: Sequence[float], t0: float) -> NDArray[np.float64]:
    """Rows ``[1, dt, dt^2 / 2]`` with ``dt = t_j - t0``."""
    dt = np.asarray(times, dtype=float) - t0
    if dt.ndim != 1 or dt.size < MIN_FIXES:
        raise WindowError(f"need at least {MIN_FIXES} epochs, got {dt.size}")
    if np.any(np.diff(dt) <= 0):
        raise WindowError("epochs must be strictly increasing")
    return np.column_stack([np.ones_like(dt), dt, 0.5 * dt * dt])


def accel_row(A: ArrayLike) -> NDArray[np.float64]:
    """
    Weights mapping window positions to the fitted acceleration.

    Third row of the pseudoinverse of ``A``. Columns are scaled by the window
    span and the least-squares problem is solved by QR, which keeps the
    conditioning of ``A`` instead of squaring it.
    """
    A = np.asarray(A, dtype=float)
    span = np.abs(A[:, 1]).max()
    if not span > 0.0:
        raise WindowError("design matrix is rank deficient")
    scale = np.array([1.0, span, span * span])
    As = A / scale
    if np.linalg.matrix_rank(As) < 3 or np.linalg.cond(As) > 1e7:
        raise WindowError("design matrix is rank deficient")
    Q, R = np.linalg.qr(As)
    return np.linalg.solve(R, Q.T)[2] / scale[2]


def accel_noise_cov(B: ArrayLike, sigma: ArrayLike) -> NDArray[np.float64]:
    """
    Variance of ``B @ p`` for independent fix errors.

    Parameters
    ----------
    B : array-like, shape (m,)
        Acceleration weights from :func:`accel_row`.
    sigma : array-like, shape (m,) or (m, 3)
        Per-fix standard deviations, one column per NED axis.

    Returns
    -------
    float or ndarray
        Scalar variance for 1-D ``sigma``, else the diagonal 3x3 covariance.
    """
    B = np.asarray(B, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    var = (B**2) @ sigma**2
    if sigma.ndim == 1:
        return var
    return np.diag(var)


class FixWindow:
    """
    Bounded buffer of the most recent GNSS fixes.

    Parameters
    ----------
    capacity : int
        Number of fixes used per fit (at least 3).
    min_span : float
        Minimum time between the oldest and newest fix before an estimate is
        produced.
    """

    def __init__(self, capacity: int = 3, min_span: float = 0.0):
        if capacity < MIN_FIXES:
            raise WindowError(f"window capacity must be >= {MIN_FIXES}")
        self.capacity = int(capacity)
        self.min_span = float(min_span)
        self.fixes: deque[GnssFix] = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self.fixes)

    @property
    def anchor(self) -> GeodeticPosition | None:
        return self.fixes[0].position if self.fixes else None

    @property
    def is_full(self) -> bool:
        return len(self.fixes) == self.capacity

    @property
    def ready(self) -> bool:
        return self.is_full and self.fixes[-1].t - self.fixes[0].t >= self.min_span

    def push_fix(self, fix: GnssFix) -> "FixWindow":
        if self.fixes and not fix.t > self.fixes[-1].t:
            raise WindowError(
                f"fix at t={fix.t} is not after the last buffered fix t={self.fixes[-1].t}"
            )
        self.fixes.append(fix)
        return self

    def clear(self) -> None:
        self.fixes.clear()


def push_fix(window: FixWindow, fix: GnssFix) -> FixWindow:
    return window.push_fix(fix)


def extract_accel(window: FixWindow) -> AccelEstimate:
    """
    Fit ``p(t) = p0 + v0 dt + a dt^2 / 2`` per NED axis and return ``a``.

    Positions are mapped onto the tangent plane at the oldest fix, and the
    estimate is stamped with that fix's time.
    """
    if not window.is_full:
        raise WindowError(f"window holds {len(window)} of {window.capacity} fixes")
    fixes = list(window.fixes)
    t0 = fixes[0].t
    A = design_matrix([f.t for f in fixes], t0)
    B = accel_row(A)
    anchor = window.anchor
    P = np.array([llh_to_local_ned(anchor, f.position) for f in fixes])
    sigma = np.array([np.broadcast_to(f.sigma, (3,)) for f in fixes], dtype=float)
    return AccelEstimate(B @ P, accel_noise_cov(B, sigma), t0)

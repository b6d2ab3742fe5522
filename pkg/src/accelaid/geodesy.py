"""WGS84 Earth model, local-level frame helpers and small rotation utilities.

Everything here is expressed in the north-east-down (NED) navigation frame,
with gravity pointing down (positive third component). Angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import AttitudeError, DomainError


@dataclass(frozen=True)
class EarthParams:
    """Ellipsoid, rotation and normal-gravity constants."""

    semi_major_axis: float = 6378137.0
    ecc2: float = 6.69437999014e-3
    rotation_rate: float = 7.292115e-5
    gravity_equator: float = 9.7803253359
    gravity_k: float = 1.931852652458e-3
    free_air_gradient: float = 3.086e-6  # m/s^2 per m

    def kernel_vector(self) -> NDArray[np.float64]:
        """Parameters packed in the order the compiled kernels expect."""
        return np.array(
            [
                self.semi_major_axis,
                self.ecc2,
                self.rotation_rate,
                self.gravity_equator,
                self.gravity_k,
                self.free_air_gradient,
            ]
        )


WGS84 = EarthParams()

MAX_TRANSPORT_LAT = math.radians(89.9)
MAX_LOCAL_DISPLACEMENT = 10_000.0


class GeodeticPosition(NamedTuple):
    """Latitude [rad], longitude [rad] and ellipsoidal height [m]."""

    lat: float
    lon: float
    h: float

    def validate(self) -> "GeodeticPosition":
        if not all(math.isfinite(x) for x in self):
            raise DomainError(f"non-finite geodetic position {tuple(self)}")
        if abs(self.lat) > math.pi / 2:
            raise DomainError(f"latitude {self.lat} outside [-pi/2, pi/2]")
        if not -math.pi < self.lon <= math.pi:
            raise DomainError(f"longitude {self.lon} outside (-pi, pi]")
        return self


def wrap_longitude(lon: float) -> float:
    """Wrap a longitude into (-pi, pi]."""
    wrapped = math.remainder(lon, 2.0 * math.pi)
    if wrapped == -math.pi:
        wrapped = math.pi
    return wrapped


def _check_lat(lat: float) -> None:
    if not abs(lat) <= math.pi / 2:
        raise DomainError(f"latitude {lat} outside [-pi/2, pi/2]")


def radii_of_curvature(lat: float, earth: EarthParams = WGS84) -> tuple[float, float]:
    """
    Meridian and normal (prime vertical) radii of curvature.

    Parameters
    ----------
    lat : float
        Geodetic latitude in radians.
    earth : EarthParams, optional
        Ellipsoid constants.

    Returns
    -------
    r_meridian : float
        Meridian radius R_M in meters.
    r_normal : float
        Normal radius R_N in meters.
    """
    _check_lat(lat)
    s2 = math.sin(lat) ** 2
    t = 1.0 - earth.ecc2 * s2
    r_normal = earth.semi_major_axis / math.sqrt(t)
    r_meridian = earth.semi_major_axis * (1.0 - earth.ecc2) / t**1.5
    return r_meridian, r_normal


def gravity_magnitude(lat: float, h: float, earth: EarthParams = WGS84) -> float:
    """Somigliana normal gravity with a linear free-air correction [m/s^2]."""
    _check_lat(lat)
    if not h > -10_000.0:
        raise DomainError(f"height {h} below -10 km")
    s2 = math.sin(lat) ** 2
    g0 = earth.gravity_equator * (1.0 + earth.gravity_k * s2) / math.sqrt(1.0 - earth.ecc2 * s2)
    return g0 - earth.free_air_gradient * h


def gravity_ned(lat: float, h: float, earth: EarthParams = WGS84) -> NDArray[np.float64]:
    """Gravity vector in NED, ``[0, 0, g]``."""
    return np.array([0.0, 0.0, gravity_magnitude(lat, h, earth)])


def skew(v: ArrayLike) -> NDArray[np.float64]:
    """Cross-product matrix: ``skew(v) @ u == np.cross(v, u)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def earth_rate_ned(lat: float, earth: EarthParams = WGS84) -> NDArray[np.float64]:
    """Earth rotation rate resolved in NED [rad/s]."""
    _check_lat(lat)
    w = earth.rotation_rate
    return np.array([w * math.cos(lat), 0.0, -w * math.sin(lat)])


def transport_rate_ned(
    v: ArrayLike, pos: GeodeticPosition, earth: EarthParams = WGS84
) -> NDArray[np.float64]:
    """
    Rotation rate of the NED frame relative to the Earth [rad/s].

    Raises
    ------
    DomainError
        If ``|lat|`` exceeds 89.9 degrees, where ``tan(lat)`` blows up.
    """
    lat, _, h = pos
    if abs(lat) > MAX_TRANSPORT_LAT:
        raise DomainError(f"transport rate undefined near the pole (lat={lat})")
    r_m, r_n = radii_of_curvature(lat, earth)
    vn, ve, _ = v
    return np.array([ve / (r_n + h), -vn / (r_m + h), -ve * math.tan(lat) / (r_n + h)])


def llh_to_local_ned(
    anchor: GeodeticPosition, p: GeodeticPosition, earth: EarthParams = WGS84
) -> NDArray[np.float64]:
    """
    Map a nearby geodetic position onto the tangent plane at ``anchor``.

    Uses the small-displacement mapping with curvature radii evaluated at the
    anchor. Displacements above 10 km raise ``DomainError``.
    """
    lat0, lon0, h0 = anchor
    r_m, r_n = radii_of_curvature(lat0, earth)
    dlon = math.remainder(p[1] - lon0, 2.0 * math.pi)
    ned = np.array(
        [(p[0] - lat0) * (r_m + h0), dlon * (r_n + h0) * math.cos(lat0), -(p[2] - h0)]
    )
    if ned[0] ** 2 + ned[1] ** 2 + ned[2] ** 2 > MAX_LOCAL_DISPLACEMENT**2:
        raise DomainError("displacement exceeds 10 km tangent-plane validity")
    return ned


def local_ned_to_llh(
    anchor: GeodeticPosition, ned: ArrayLike, earth: EarthParams = WGS84
) -> GeodeticPosition:
    """Inverse of :func:`llh_to_local_ned`."""
    lat0, lon0, h0 = anchor
    r_m, r_n = radii_of_curvature(lat0, earth)
    n, e, d = ned
    return GeodeticPosition(
        lat0 + n / (r_m + h0),
        wrap_longitude(lon0 + e / ((r_n + h0) * math.cos(lat0))),
        h0 - d,
    )


def so3_exp(rotvec: ArrayLike) -> NDArray[np.float64]:
    """Rotation matrix for a rotation vector (Rodrigues formula)."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = math.sqrt(rotvec @ rotvec)
    k = skew(rotvec)
    if angle < 1e-8:
        return np.eye(3) + k + 0.5 * (k @ k)
    return (
        np.eye(3)
        + (math.sin(angle) / angle) * k
        + ((1.0 - math.cos(angle)) / angle**2) * (k @ k)
    )


def so3_log(R: ArrayLike) -> NDArray[np.float64]:
    """Rotation vector of a rotation matrix (inverse of :func:`so3_exp`)."""
    R = np.asarray(R, dtype=float)
    cos_angle = min(1.0, max(-1.0, 0.5 * (np.trace(R) - 1.0)))
    angle = math.acos(cos_angle)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-6:
        return 0.5 * w
    if math.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; use the symmetric part
        axis = np.sqrt(np.maximum((np.diag(R) + 1.0) / 2.0, 0.0))
        i = int(np.argmax(axis))
        axis = (R[:, i] + np.eye(3)[:, i]) / (2.0 * axis[i])
        return angle * axis / np.linalg.norm(axis)
    return angle / (2.0 * math.sin(angle)) * w


def orthonormalize(R: ArrayLike) -> NDArray[np.float64]:
    """
    Project onto the nearest rotation matrix.

    Near-orthonormal inputs get one polar-decomposition Newton step, which is
    exact to rounding for the drift that accumulates per integration step;
    anything further off goes through the SVD.
    """
    R = np.asarray(R, dtype=float)
    err = R.T @ R - np.eye(3)
    if np.abs(err).max() < 1e-6:
        return R - 0.5 * R @ err
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def check_rotation(R: ArrayLike, tol: float = 1e-9) -> NDArray[np.float64]:
    """Return ``R`` as an array, raising ``AttitudeError`` if not a rotation."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise AttitudeError("rotation must be a finite 3x3 matrix")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise AttitudeError("rotation matrix is not orthonormal with det=+1")
    return R


def euler_to_dcm(roll: float, pitch: float, yaw: float) -> NDArray[np.float64]:
    """Body-to-NED rotation from ZYX Euler angles."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def dcm_to_euler(R: ArrayLike) -> tuple[float, float, float]:
    """ZYX Euler angles (roll, pitch, yaw) of a body-to-NED rotation."""
    R = np.asarray(R)
    roll = math.atan2(R[2, 1], R[2, 2])
    pitch = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    yaw = math.atan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw

"""
Compiled single-step kernels for the filter hot loop.

These mirror ``strapdown._integrate``, ``ekf.build_F``, ``ekf.build_Q`` and
``ekf.predict`` operation for operation; the test suite checks them against
the numpy versions.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _skew(v):
    out = np.zeros((3, 3))
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]
    return out


@njit(cache=True)
def _so3_exp(rv):
    angle = math.sqrt(rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2])
    k = _skew(rv)
    kk = k @ k
    if angle < 1e-8:
        return np.eye(3) + k + 0.5 * kk
    return np.eye(3) + (math.sin(angle) / angle) * k + ((1.0 - math.cos(angle)) / angle**2) * kk


@njit(cache=True)
def _orthonormalize(R):
    err = R.T @ R - np.eye(3)
    if np.abs(err).max() < 1e-6:
        return R - 0.5 * (R @ err)
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, 2] *= -1.0
        out = u @ vt
    return out


@njit(cache=True)
def _frame_terms(pos, vel, earth):
    a, e2, w_ie, g_e, g_k, fa = earth[0], earth[1], earth[2], earth[3], earth[4], earth[5]
    lat, h = pos[0], pos[2]
    s = math.sin(lat)
    c = math.cos(lat)
    t = 1.0 - e2 * s * s
    r_n = a / math.sqrt(t)
    r_m = a * (1.0 - e2) / t**1.5
    g = g_e * (1.0 + g_k * s * s) / math.sqrt(t) - fa * h
    w_ie_n = np.array([w_ie * c, 0.0, -w_ie * s])
    w_en_n = np.array(
        [vel[1] / (r_n + h), -vel[0] / (r_m + h), -vel[1] * math.tan(lat) / (r_n + h)]
    )
    return r_m, r_n, g, w_ie_n, w_en_n


@njit(cache=True)
def _coriolis_solve(c, y, k):
    # (I + k [c x])^-1 y in closed form
    ky = k * np.cross(c, y)
    kky = k * np.cross(c, ky)
    return y + (kky - ky) / (1.0 + k * k * (c @ c))


@njit(cache=True)
def nav_step(pos, vel, R, f, w, dt, earth):
    r_m, r_n, g, w_ie_n, w_en_n = _frame_terms(pos, vel, earth)
    R1 = _orthonormalize(_so3_exp(-(w_ie_n + w_en_n) * dt) @ R @ _so3_exp(w * dt))
    a = 0.5 * (R + R1) @ f
    a[2] += g
    c = 2.0 * w_ie_n + w_en_n
    v1 = _coriolis_solve(c, vel + dt * a - 0.5 * dt * np.cross(c, vel), 0.5 * dt)
    vm = 0.5 * (vel + v1)
    h_mid = pos[2] - 0.5 * dt * vm[2]
    dlat = dt * vm[0] / (r_m + h_mid)
    p1 = np.empty(3)
    p1[0] = pos[0] + dlat
    lon = pos[1] + dt * vm[1] / ((r_n + h_mid) * math.cos(pos[0] + 0.5 * dlat))
    if lon > math.pi:
        lon -= 2.0 * math.pi
    elif lon <= -math.pi:
        lon += 2.0 * math.pi
    p1[1] = lon
    p1[2] = pos[2] - dt * vm[2]
    return p1, v1, R1


@njit(cache=True)
def error_dynamics(pos, vel, R, f, w, earth):
    r_m, r_n, g, w_ie_n, w_en_n = _frame_terms(pos, vel, earth)
    lat, h = pos[0], pos[2]
    vn, ve, vd = vel[0], vel[1], vel[2]
    rm = r_m + h
    rn = r_n + h
    tan_l = math.tan(lat)
    sec2 = 1.0 + tan_l * tan_l
    w_ie = earth[2]

    d_ie_p = np.zeros((3, 3))
    d_ie_p[0, 0] = -w_ie * math.sin(lat) / rm
    d_ie_p[2, 0] = -w_ie * math.cos(lat) / rm
    d_en_p = np.zeros((3, 3))
    d_en_p[2, 0] = -ve * sec2 / (rn * rm)
    d_en_p[0, 2] = ve / rn**2
    d_en_p[1, 2] = -vn / rm**2
    d_en_p[2, 2] = -ve * tan_l / rn**2
    d_en_v = np.zeros((3, 3))
    d_en_v[0, 1] = 1.0 / rn
    d_en_v[1, 0] = -1.0 / rm
    d_en_v[2, 1] = -tan_l / rn

    F = np.zeros((15, 15))
    F[0, 0] = -vd / rm
    F[0, 2] = vn / rm
    F[1, 0] = ve * tan_l / rm
    F[1, 1] = -vd / rn - vn * tan_l / rm
    F[1, 2] = ve / rn
    for i in range(3):
        F[i, 3 + i] = 1.0
    v_x = _skew(vel)
    F[3:6, 0:3] = v_x @ (2.0 * d_ie_p + d_en_p)
    F[5, 2] += 2.0 * g / math.sqrt(r_m * r_n)
    F[3:6, 3:6] = -_skew(2.0 * w_ie_n + w_en_n) + v_x @ d_en_v
    F[3:6, 6:9] = R @ _skew(f)
    F[3:6, 9:12] = -R
    F[6:9, 0:3] = R.T @ (d_ie_p + d_en_p)
    F[6:9, 3:6] = R.T @ d_en_v
    F[6:9, 6:9] = -_skew(w)
    for i in range(3):
        F[6 + i, 12 + i] = 1.0
    return F


@njit(cache=True)
def covariance_step(P, pos, vel, R, f, w, dt, earth, wdiag):
    F = error_dynamics(pos, vel, R, f, w, earth)
    Phi = np.eye(15) + F * dt
    Q = np.zeros((15, 15))
    Ra = R * wdiag[0:3]
    Q[3:6, 3:6] = Ra @ R.T * dt
    for i in range(3):
        Q[6 + i, 6 + i] = wdiag[3 + i] * dt
        Q[9 + i, 9 + i] = wdiag[6 + i] * dt
        Q[12 + i, 12 + i] = wdiag[9 + i] * dt
    P1 = Phi @ P @ Phi.T + Q
    return 0.5 * (P1 + P1.T)


@njit(cache=True)
def propagate_block(pos, vel, R, P, f_raw, w_raw, dts, ba, bg, earth, wdiag):
    """Run consecutive steps; rows of ``f_raw``/``w_raw`` are uncorrected IMU."""
    hist = np.empty((dts.shape[0], 3))
    for k in range(dts.shape[0]):
        f = f_raw[k] - ba
        w = w_raw[k] - bg
        P = covariance_step(P, pos, vel, R, f, w, dts[k], earth, wdiag)
        pos, vel, R = nav_step(pos, vel, R, f, w, dts[k], earth)
        hist[k] = pos
    return pos, vel, R, P, hist

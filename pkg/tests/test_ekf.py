import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accelaid import _kernels
from accelaid.ekf import (
    ATT,
    BA,
    BG,
    N_STATES,
    POS,
    VEL,
    ErrorStateEKF,
    Measurement,
    ProcessNoiseParams,
    build_F,
    build_G,
    build_Q,
    check_psd,
    discretize,
    inject_and_reset,
    predict,
    update,
)
from accelaid.errors import CovarianceError, SingularInnovationError, SmallAngleError
from accelaid.geodesy import (
    GeodeticPosition,
    gravity_ned,
    earth_rate_ned,
    llh_to_local_ned,
    local_ned_to_llh,
    skew,
    so3_exp,
    so3_log,
)
from accelaid.strapdown import NavState, _integrate, nav_rates

from conftest import random_spd, random_state

BLOCKS = [POS, VEL, ATT, BA, BG]


def block(M, i, j):
    return M[BLOCKS[i], BLOCKS[j]]


# ---------------------------------------------------------------- F and G


def test_F_zero_pattern(rng):
    for _ in range(10):
        s = random_state(rng)
        F = build_F(s, rng.normal(size=3), rng.normal(size=3))
        assert np.all(F[BA] == 0.0) and np.all(F[BG] == 0.0)
        for i, j in [(0, 2), (0, 3), (0, 4), (1, 4), (2, 3)]:
            assert np.all(block(F, i, j) == 0.0)
        np.testing.assert_array_equal(block(F, 0, 1), np.eye(3))
        # bias errors are estimate minus truth: a positive accel bias error
        # lowers the corrected force, hence the minus sign
        np.testing.assert_array_equal(block(F, 1, 3), -s.attitude)
        # body-side misalignment: gyro bias error enters without rotation
        np.testing.assert_array_equal(block(F, 2, 4), np.eye(3))


def test_F_vpsi_block(rng):
    s = random_state(rng)
    f = rng.normal(size=3)
    phi = rng.normal(size=3)
    F = build_F(s, f)
    np.testing.assert_allclose(block(F, 1, 2) @ phi, s.attitude @ np.cross(f, phi), atol=1e-12)
    assert np.all(block(build_F(s, np.zeros(3)), 1, 2) == 0.0)


def _error(est, tru):
    return np.concatenate(
        [
            llh_to_local_ned(tru.position, est.position),
            est.velocity - tru.velocity,
            so3_log(est.attitude.T @ tru.attitude),
            est.accel_bias - tru.accel_bias,
            est.gyro_bias - tru.gyro_bias,
        ]
    )


def _perturb(tru, dx):
    return NavState(
        local_ned_to_llh(tru.position, dx[POS]),
        tru.velocity + dx[VEL],
        tru.attitude @ so3_exp(-dx[ATT]),
        tru.timestamp,
        tru.accel_bias + dx[BA],
        tru.gyro_bias + dx[BG],
    )


def _step(s, f_raw, w_raw, dt):
    return _integrate(s, f_raw - s.accel_bias, w_raw - s.gyro_bias, nav_rates(s), dt)


@pytest.mark.parametrize("blk, scale", [(0, 100.0), (1, 0.1), (2, 1e-3), (3, 1e-2), (4, 1e-3)])
def test_F_matches_perturbed_mechanization(rng, blk, scale):
    """Central time difference of the error between two mechanized states."""
    for _ in range(5):
        tru = random_state(rng, speed=30.0)
        tru.position = GeodeticPosition(tru.position.lat, tru.position.lon, 100.0)
        f = rng.normal(scale=2.0, size=3) + tru.attitude.T @ [0, 0, -9.8]
        w = rng.normal(scale=0.3, size=3)
        dx = np.zeros(N_STATES)
        dx[BLOCKS[blk]] = scale * rng.normal(size=3)
        est = _perturb(tru, dx)
        dt = 1e-2
        fwd = _error(_step(est, f, w, dt), _step(tru, f, w, dt))
        bwd = _error(_step(est, f, w, -dt), _step(tru, f, w, -dt))
        numeric = (fwd - bwd) / (2 * dt)
        predicted = build_F(tru, f, w) @ dx
        assert np.linalg.norm(numeric - predicted) <= 1e-2 * np.linalg.norm(predicted)


def test_G_blocks(rng):
    s = random_state(rng)
    G = build_G(s)
    assert G.shape == (15, 12)
    assert np.all(G[POS] == 0.0)
    np.testing.assert_array_equal(G[VEL, 0:3], s.attitude)
    np.testing.assert_array_equal(G[ATT, 3:6], np.eye(3))
    np.testing.assert_array_equal(G[BA, 6:9], np.eye(3))
    np.testing.assert_array_equal(G[BG, 9:12], np.eye(3))
    assert np.count_nonzero(G[VEL, 3:]) == 0 and np.count_nonzero(G[ATT, 6:]) == 0


# ---------------------------------------------------------------- discretize / Q / predict


def test_discretize(rng):
    np.testing.assert_array_equal(discretize(np.zeros((15, 15)), 0.01), np.eye(15))
    F = rng.normal(size=(15, 15))
    np.testing.assert_array_equal(discretize(F, 0.0), np.eye(15))
    np.testing.assert_allclose(discretize(F, 0.01) - np.eye(15), F * 0.01, atol=1e-15)


def test_build_Q(rng):
    s = random_state(rng)
    G = build_G(s)
    zero = ProcessNoiseParams((0,) * 3, (0,) * 3, (0,) * 3, (0,) * 3)
    assert np.all(build_Q(G, zero, 0.01) == 0.0)
    params = ProcessNoiseParams(
        tuple(rng.uniform(0, 1, 3)), tuple(rng.uniform(0, 1, 3)), (1e-3,) * 3, (1e-5,) * 3
    )
    Q1 = build_Q(G, params, 0.01)
    np.testing.assert_array_equal(Q1, Q1.T)
    np.testing.assert_allclose(build_Q(G, params, 0.02), 2.0 * Q1, rtol=1e-14)
    assert np.linalg.eigvalsh(Q1).min() > -1e-15


def test_process_noise_validation():
    with pytest.raises(ValueError):
        ProcessNoiseParams(accel_noise=(-1.0, 0.0, 0.0))
    assert ProcessNoiseParams(accel_noise=0.5).accel_noise == (0.5, 0.5, 0.5)


def test_predict_examples(rng):
    P = random_spd(rng, 15)
    P = 0.5 * (P + P.T)
    np.testing.assert_array_equal(predict(P, np.eye(15), np.zeros((15, 15))), P)
    np.testing.assert_allclose(predict(np.eye(15), 2 * np.eye(15), np.zeros((15, 15))), 4 * np.eye(15))
    Phi = np.eye(15) + 0.01 * rng.normal(size=(15, 15))
    out = predict(P, Phi, 0.01 * np.eye(15), full_check=True)
    np.testing.assert_array_equal(out, out.T)
    assert np.linalg.eigvalsh(out).min() > 0


def test_predict_rejects_negative_diagonal():
    with pytest.raises(CovarianceError):
        predict(-np.eye(15), np.eye(15), np.zeros((15, 15)))
    bad = np.eye(15)
    bad[0, 1] = bad[1, 0] = 5.0
    with pytest.raises(CovarianceError):
        check_psd(bad)


def test_covariance_kernel_matches_numpy(rng):
    noise = ProcessNoiseParams((0.01,) * 3, (2e-4,) * 3, (1e-4,) * 3, (1e-6,) * 3)
    wdiag = noise.spectral_diag()
    earth = ErrorStateEKF(random_state(rng), np.eye(15), noise)._earth
    for _ in range(20):
        s = random_state(rng)
        P = random_spd(rng, 15)
        P = 0.5 * (P + P.T)
        f, w = rng.normal(size=3), rng.normal(size=3)
        expected = predict(P, discretize(build_F(s, f, w), 0.01), build_Q(build_G(s), noise, 0.01))
        got = _kernels.covariance_step(
            P, np.array(s.position), s.velocity, s.attitude, f, w, 0.01, earth, wdiag
        )
        np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12 * np.abs(expected).max())


# ---------------------------------------------------------------- update


def _select(i, r=1.0, z=1.0):
    H = np.zeros((1, 15))
    H[0, i] = 1.0
    return Measurement(np.array([z]), H, np.array([[r]]))


def test_update_scalar_closed_form():
    dx, P_plus, K = update(np.eye(15), _select(4))
    assert K[4, 0] == 0.5
    assert dx[4] == 0.5
    assert P_plus[4, 4] == 0.5
    mask = np.ones(15, bool)
    mask[4] = False
    assert np.all(dx[mask] == 0.0)


def test_update_uninformative(rng):
    P = random_spd(rng, 15)
    P = 0.5 * (P + P.T)
    H = rng.normal(size=(3, 15))
    dx, P_plus, _ = update(P, Measurement(rng.normal(size=3), H, 1e12 * np.eye(3)))
    assert np.abs(dx).max() < 1e-8
    np.testing.assert_allclose(P_plus, P, rtol=1e-6, atol=1e-8)


def test_update_matches_explicit_inverse(rng):
    for _ in range(20):
        P = random_spd(rng, 15)
        P = 0.5 * (P + P.T)
        H = rng.normal(size=(6, 15))
        R = random_spd(rng, 6, 0.1)
        z = rng.normal(size=6)
        dx, P_plus, K = update(P, Measurement(z, H, R))
        K_ref = P @ H.T @ np.linalg.inv(H @ P @ H.T + R)
        np.testing.assert_allclose(K, K_ref, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(dx, K_ref @ z, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(P_plus, (np.eye(15) - K_ref @ H) @ P, rtol=1e-8, atol=1e-10)


def test_update_singular_innovation():
    P = np.zeros((15, 15))
    H = np.zeros((2, 15))
    H[:, 0] = 1.0
    with pytest.raises(SingularInnovationError):
        update(P, Measurement(np.zeros(2), H, np.zeros((2, 2))))


def test_measurement_shape_validation():
    with pytest.raises(ValueError):
        Measurement(np.zeros(3), np.zeros((2, 15)), np.eye(3))
    with pytest.raises(ValueError):
        Measurement(np.zeros(3), np.zeros((3, 15)), np.eye(2))
    assert Measurement(0.0, np.zeros(15), 1.0).dim == 1


# ---------------------------------------------------------------- injection


def test_inject_zero(rng):
    s = random_state(rng)
    s.accel_bias = np.array([0.1, 0.2, 0.3])
    out = inject_and_reset(s, np.zeros(15))
    assert np.linalg.norm(llh_to_local_ned(s.position, out.position)) < 1e-9
    np.testing.assert_array_equal(out.velocity, s.velocity)
    np.testing.assert_allclose(out.attitude, s.attitude, atol=1e-15)
    np.testing.assert_array_equal(out.accel_bias, s.accel_bias)
    np.testing.assert_array_equal(out.gyro_bias, s.gyro_bias)


def test_inject_velocity_only(rng):
    s = random_state(rng)
    dx = np.zeros(15)
    dx[3] = 1.0
    out = inject_and_reset(s, dx)
    np.testing.assert_allclose(out.velocity, s.velocity - [1, 0, 0], atol=1e-15)
    assert tuple(out.position) == pytest.approx(tuple(s.position), abs=1e-12)
    np.testing.assert_allclose(out.attitude, s.attitude, atol=1e-15)


def test_inject_position_and_bias_signs(rng):
    s = random_state(rng)
    dx = np.zeros(15)
    dx[POS] = [3.0, -2.0, 1.0]
    dx[BA] = [0.01, 0.02, 0.03]
    out = inject_and_reset(s, dx)
    np.testing.assert_allclose(llh_to_local_ned(s.position, out.position), -dx[POS], atol=1e-6)
    np.testing.assert_allclose(out.accel_bias, -dx[BA], atol=1e-15)


@pytest.mark.parametrize("angle", [1e-2, 1e-3, 1e-4])
def test_inject_attitude_second_order(rng, angle):
    for _ in range(10):
        s = random_state(rng)
        phi = angle * rng.normal(size=3) / math.sqrt(3)
        true_att = s.attitude @ so3_exp(phi)
        dx = np.zeros(15)
        dx[ATT] = phi
        out = inject_and_reset(s, dx)
        residual = so3_log(out.attitude.T @ true_att)
        assert np.linalg.norm(residual) <= 10 * np.linalg.norm(phi) ** 2 + 1e-14


def test_inject_rejects_large_angle(rng):
    dx = np.zeros(15)
    dx[ATT] = [0.6, 0.0, 0.0]
    with pytest.raises(SmallAngleError):
        inject_and_reset(random_state(rng), dx)


# ---------------------------------------------------------------- invariants


def test_joseph_form_agreement(rng):
    for _ in range(100):
        P = random_spd(rng, 15)
        P = 0.5 * (P + P.T)
        H = rng.normal(size=(3, 15))
        R = random_spd(rng, 3)
        _, P_plus, K = update(P, Measurement(np.zeros(3), H, R))
        IKH = np.eye(15) - K @ H
        joseph = IKH @ P @ IKH.T + K @ R @ K.T
        assert np.linalg.norm(joseph - P_plus) <= 1e-8 * np.linalg.norm(P_plus)


def test_stacked_equals_sequential(rng):
    for _ in range(50):
        P = random_spd(rng, 15)
        P = 0.5 * (P + P.T)
        m1 = Measurement(rng.normal(size=3), rng.normal(size=(3, 15)), random_spd(rng, 3))
        m2 = Measurement(rng.normal(size=2), rng.normal(size=(2, 15)), random_spd(rng, 2))
        stacked = Measurement(
            np.concatenate([m1.residual, m2.residual]),
            np.vstack([m1.H, m2.H]),
            np.block([[m1.R, np.zeros((3, 2))], [np.zeros((2, 3)), m2.R]]),
        )
        dx_s, P_s, _ = update(P, stacked)
        dx1, P1, _ = update(P, m1)
        # the second update sees the residual re-linearized about the first correction
        m2b = Measurement(m2.residual - m2.H @ dx1, m2.H, m2.R)
        dx2, P2, _ = update(P1, m2b)
        assert np.linalg.norm(P2 - P_s) <= 1e-9 * np.linalg.norm(P_s)
        assert np.linalg.norm(dx1 + dx2 - dx_s) <= 1e-9 * np.linalg.norm(dx_s)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_filter_keeps_covariance_psd(seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, speed=5.0)
    noise = ProcessNoiseParams((0.01,) * 3, (2e-4,) * 3, (1e-4,) * 3, (1e-6,) * 3)
    ekf = ErrorStateEKF(s, np.diag(rng.uniform(1e-6, 4.0, 15)), noise)
    lat, _, h = s.position
    f = -s.attitude.T @ gravity_ned(lat, h)
    w = s.attitude.T @ earth_rate_ned(lat)
    for k in range(5):
        t = ekf.state.timestamp + 0.01 * np.arange(1, 101)
        ekf.propagate_many(t, np.tile(f, (100, 1)), np.tile(w, (100, 1)))
        H = np.zeros((3, 15))
        H[:, POS] = np.eye(3)
        dz = rng.normal(size=3)
        dx, ekf.P, _ = update(ekf.P, Measurement(dz, H, np.eye(3)))
        np.testing.assert_array_equal(ekf.P, ekf.P.T)
        check_psd(ekf.P)


def test_ekf_propagate_single_matches_block(rng):
    s = random_state(rng, speed=5.0)
    noise = ProcessNoiseParams()
    a = ErrorStateEKF(s.copy(), np.eye(15), noise)
    b = ErrorStateEKF(s.copy(), np.eye(15), noise)
    f = rng.normal(size=(50, 3)) + [0, 0, -9.8]
    w = 0.1 * rng.normal(size=(50, 3))
    t = 0.01 * np.arange(1, 51)
    from accelaid.strapdown import ImuSample

    for k in range(50):
        a.propagate(ImuSample(t[k], f[k], w[k]), 0.01)
    hist = b.propagate_many(t, f, w)
    assert hist.shape == (50, 3)
    np.testing.assert_allclose(np.array(b.state.position), np.array(a.state.position), rtol=1e-14)
    np.testing.assert_allclose(b.P, a.P, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(b.last_f, a.last_f)

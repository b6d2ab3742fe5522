import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accelaid.errors import WindowError
from accelaid.geodesy import GeodeticPosition, llh_to_local_ned, local_ned_to_llh
from accelaid.gnss_accel import (
    FixWindow,
    GnssFix,
    accel_noise_cov,
    accel_row,
    design_matrix,
    extract_accel,
    push_fix,
)

ANCHOR = GeodeticPosition(math.radians(32.8), math.radians(35.0), 50.0)


def window_from_ned(times, ned, sigma=1.0, anchor=ANCHOR):
    w = FixWindow(len(times))
    for t, p in zip(times, ned):
        w.push_fix(GnssFix(t, local_ned_to_llh(anchor, p), np.full(3, sigma)))
    return w


def increasing_times(rng, m, span):
    t = np.sort(rng.uniform(0.0, span, m))
    t[0], t[-1] = 0.0, span
    return np.unique(t) if len(np.unique(t)) == m else np.linspace(0, span, m)


def test_push_fix_semantics():
    w = FixWindow(3)
    fix = GnssFix(0.0, ANCHOR, np.ones(3))
    push_fix(w, fix)
    assert len(w) == 1 and w.anchor == ANCHOR
    for t in (1.0, 2.0, 3.0):
        w.push_fix(GnssFix(t, GeodeticPosition(ANCHOR.lat, ANCHOR.lon, t), np.ones(3)))
    assert len(w) == 3
    assert [f.t for f in w.fixes] == [1.0, 2.0, 3.0]
    assert w.anchor.h == 1.0
    with pytest.raises(WindowError):
        w.push_fix(GnssFix(2.5, ANCHOR, np.ones(3)))
    with pytest.raises(WindowError):
        w.push_fix(GnssFix(3.0, ANCHOR, np.ones(3)))


def test_window_capacity_and_span():
    with pytest.raises(WindowError):
        FixWindow(2)
    w = FixWindow(3, min_span=3.0)
    for t in (0.0, 1.0, 2.0):
        w.push_fix(GnssFix(t, ANCHOR, np.ones(3)))
    assert w.is_full and not w.ready
    w.push_fix(GnssFix(4.0, ANCHOR, np.ones(3)))
    assert w.ready
    w.clear()
    assert len(w) == 0 and w.anchor is None


def test_extract_needs_full_window():
    w = FixWindow(3)
    w.push_fix(GnssFix(0.0, ANCHOR, np.ones(3)))
    with pytest.raises(WindowError):
        extract_accel(w)


def test_design_matrix_example():
    np.testing.assert_array_equal(
        design_matrix([0, 1, 2], 0), [[1, 0, 0], [1, 1, 0.5], [1, 2, 2]]
    )


@given(
    st.lists(st.floats(0.1, 3.0), min_size=2, max_size=9),
    st.floats(-1e4, 1e4),
    st.floats(-1e3, 1e3),
)
def test_design_matrix_shift(gaps, t0, c):
    times = t0 + np.concatenate([[0.0], np.cumsum(gaps)])
    A = design_matrix(times, times[0])
    np.testing.assert_array_equal(A[0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(design_matrix(times + c, times[0] + c), A, atol=1e-9)


@pytest.mark.parametrize("times", [[0.0, 1.0], [0.0, 1.0, 1.0], [0.0, 2.0, 1.0]])
def test_design_matrix_rejects(times):
    with pytest.raises(WindowError):
        design_matrix(times, 0.0)


def test_exact_quadratic_m3():
    a = np.array([0.2, -0.1, 0.05])
    # first fix on the anchor so the tangent plane is the window's own
    p0, v0 = np.zeros(3), np.array([5.0, 1.0, -0.2])
    times = np.array([10.0, 11.0, 12.0])
    ned = [p0 + v0 * (t - 10) + 0.5 * a * (t - 10) ** 2 for t in times]
    est = extract_accel(window_from_ned(times, ned))
    np.testing.assert_allclose(est.accel, a, atol=1e-9)
    assert est.t == 10.0


def test_constant_position_gives_zero():
    est = extract_accel(window_from_ned([0, 1, 2, 3], [[5.0, 5.0, -1.0]] * 4))
    np.testing.assert_allclose(est.accel, 0.0, atol=1e-9)


def test_noisy_m6_matches_pseudoinverse(rng):
    times = np.array([0.0, 0.8, 2.1, 2.9, 4.2, 5.0])
    ned = rng.normal(scale=20.0, size=(6, 3))
    est = extract_accel(window_from_ned(times, ned))
    A = np.column_stack([np.ones(6), times, 0.5 * times**2])
    first = local_ned_to_llh(ANCHOR, ned[0])
    P = np.array([llh_to_local_ned(first, local_ned_to_llh(ANCHOR, p)) for p in ned])
    expected = (np.linalg.pinv(A) @ P)[2]
    np.testing.assert_allclose(est.accel, expected, rtol=1e-9, atol=1e-12)


def test_second_difference_weights():
    B = accel_row(design_matrix([0, 1, 2], 0))
    np.testing.assert_allclose(B, [1, -2, 1], atol=1e-12)
    assert accel_noise_cov(B, np.ones(3)) == pytest.approx(6.0)
    assert accel_noise_cov(B, np.zeros(3)) == 0.0
    assert accel_noise_cov(B, 2.5 * np.ones(3)) == pytest.approx(6.0 * 2.5**2)
    cov = accel_noise_cov(B, np.tile([1.0, 2.0, 3.0], (3, 1)))
    np.testing.assert_allclose(cov, np.diag([6.0, 24.0, 54.0]))


def test_noise_cov_in_estimate():
    est = extract_accel(window_from_ned([0, 1, 2], np.zeros((3, 3)), sigma=1.5))
    np.testing.assert_allclose(est.noise_cov, 6 * 1.5**2 * np.eye(3), rtol=1e-12)


@settings(max_examples=100)
@given(st.integers(3, 10), st.integers(0, 2**32 - 1))
def test_weight_invariances(m, seed):
    rng = np.random.default_rng(seed)
    dt = increasing_times(rng, m, rng.uniform(1.0, 10.0))
    B = accel_row(design_matrix(dt, 0.0))
    assert abs(B.sum()) < 1e-12 * np.abs(B).sum() + 1e-12
    assert abs(B @ dt) < 1e-12 * (np.abs(B) @ dt) + 1e-12
    assert B @ (0.5 * dt**2) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50)
@given(st.integers(3, 8), st.integers(0, 2**32 - 1))
def test_offset_ramp_shift_invariance(m, seed):
    rng = np.random.default_rng(seed)
    dt = increasing_times(rng, m, rng.uniform(2.0, 8.0))
    B = accel_row(design_matrix(dt, 0.0))
    P = rng.normal(scale=10.0, size=(m, 3))
    offset = rng.normal(scale=50.0, size=3)
    ramp = rng.normal(scale=5.0, size=3)
    moved = P + offset + np.outer(dt, ramp)
    np.testing.assert_allclose(B @ moved, B @ P, atol=1e-9)
    times = 100.0 + dt
    base = extract_accel(window_from_ned(times, P)).accel
    shifted = extract_accel(window_from_ned(times + 37.5, P)).accel
    np.testing.assert_allclose(shifted, base, rtol=1e-12, atol=1e-12)


def test_m3_fit_residual_is_zero(rng):
    times = np.array([0.0, 1.3, 2.2])
    P = rng.normal(size=3)
    A = design_matrix(times, 0.0)
    theta = np.linalg.solve(A.T @ A, A.T @ P)
    np.testing.assert_allclose(A @ theta, P, atol=1e-12)

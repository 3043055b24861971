import math

import numpy as np
import pytest

from hero_mux.fusion import (
    GRAVITY,
    FilterState,
    ImuSample,
    InvalidDt,
    LooselyCoupledFilter,
    NumericalFailure,
    ProcessNoise,
    anchor_for,
    default_covariance,
    height_from_range,
    pose_jacobian,
    pose_residual,
    predict,
    reset_from,
    update_height,
    update_local_pose,
    update_pose,
)
from hero_mux.geometry import Pose, UnitRotation, compose
from tests.conftest import random_pose

HOVER = -GRAVITY
ZERO_NOISE = ProcessNoise(0.0, 0.0, 0.0, 0.0)


def imu(gyro=(0, 0, 0), accel=HOVER, stamp=0.0):
    return ImuSample(stamp, np.asarray(gyro, float), np.asarray(accel, float))


def run(s, n, dt, sample, noise=ZERO_NOISE):
    for k in range(n):
        s = predict(s, sample, dt, noise)
    return s


def test_hover_equilibrium():
    s0 = FilterState(p=np.array([1.0, 2.0, 3.0]), r=UnitRotation.from_ypr(0.4))
    s = run(s0, 200, 0.01, imu())
    np.testing.assert_allclose(s.p, s0.p, atol=1e-12)
    np.testing.assert_allclose(s.v, 0.0, atol=1e-12)
    assert s.r.angle() == pytest.approx(0.4, abs=1e-12)


def test_constant_velocity_closed_form():
    s = run(FilterState(v=np.array([1.0, 0, 0])), 100, 0.01, imu())
    np.testing.assert_allclose(s.p, [1.0, 0, 0], atol=1e-6)


def test_yaw_rate_closed_form():
    s = run(FilterState(), 1000, 0.01, imu(gyro=(0, 0, 0.1)))
    assert s.r.ypr()[0] == pytest.approx(1.0, abs=1e-6)


def test_predict_rejects_bad_dt():
    for dt in (0.0, -0.01, 0.2):
        with pytest.raises(InvalidDt):
            predict(FilterState(), imu(), dt)


def test_trace_non_decreasing_without_updates(rng):
    s = FilterState()
    prev = np.trace(s.P)
    for _ in range(500):
        s = predict(s, imu(rng.normal(0, 0.3, 3), HOVER + rng.normal(0, 0.5, 3)), 0.005)
        tr = np.trace(s.P)
        assert tr >= prev - 1e-15
        prev = tr


def test_update_with_prior_mean_shrinks_covariance():
    s = FilterState(p=np.array([1.0, 2, 3]), P=default_covariance(pos=1.0))
    out = update_pose(s, s.pose, _cov(1.0))
    np.testing.assert_allclose(out.p, s.p, atol=1e-15)
    assert np.trace(out.P[:3, :3]) < np.trace(s.P[:3, :3])


def _cov(v):
    from hero_mux.state import CovarianceBlock
    return CovarianceBlock.isotropic(v)


def test_update_scalar_gain_half():
    s = FilterState(P=default_covariance(pos=1.0))
    out = update_pose(s, Pose((1, 0, 0)), _cov(1.0))
    np.testing.assert_allclose(out.p, [0.5, 0, 0], atol=1e-12)
    np.testing.assert_allclose(np.diag(out.P)[:3], 0.5, atol=1e-12)


def test_uninformative_measurement_keeps_prior():
    s = FilterState(P=default_covariance(pos=1.0))
    out = update_pose(s, Pose((1, 0, 0)), _cov(1e12), att_var=1e12)
    np.testing.assert_allclose(out.p, s.p, atol=1e-6)
    np.testing.assert_allclose(out.P, s.P, atol=1e-6)


def test_degenerate_innovation_raises():
    s = FilterState(P=np.zeros((15, 15)))
    with pytest.raises(NumericalFailure):
        update_pose(s, Pose((1, 0, 0)), _cov(0.0), att_var=None)


def test_height_update_examples():
    s = FilterState(p=np.array([0.3, -0.7, 0.0]), P=default_covariance(pos=1.0))
    out = update_height(s, 2.0, 1.0)
    assert out.p[2] == pytest.approx(1.0, abs=1e-12)
    assert out.p[0] == s.p[0] and out.p[1] == s.p[1]
    same = update_height(s, 0.0, 1.0)
    np.testing.assert_array_equal(same.p, s.p)
    with pytest.raises(ValueError):
        update_height(s, 1.0, 0.0)


def test_height_from_range_level_and_tilted():
    assert height_from_range(2.0, UnitRotation()) == pytest.approx(2.0)
    tilt = 0.2
    assert height_from_range(2.0 / math.cos(tilt), UnitRotation.from_ypr(0.5, tilt)) == pytest.approx(2.0)


def test_reset_from_examples(rng):
    s = FilterState(p=np.array([1.0, 2, 3]), r=UnitRotation.from_ypr(0.3), v=np.array([0.5, 0, 0]))
    same = reset_from(s, Pose())
    np.testing.assert_array_equal(same.p, s.p)
    np.testing.assert_array_equal(same.v, s.v)
    anchored = reset_from(s, anchor_for(s, Pose()))
    y = pose_residual(anchored, compose(anchored.frame, Pose()))
    np.testing.assert_allclose(y, 0.0, atol=1e-12)
    first = random_pose(rng)
    anchored = reset_from(s, anchor_for(s, first))
    out = update_local_pose(anchored, first, _cov(0.01))
    np.testing.assert_allclose(out.p, s.p, atol=1e-12)


def test_pose_jacobian_matches_finite_differences(rng):
    for _ in range(50):
        s = FilterState(p=rng.normal(size=3), r=UnitRotation(rng.normal(size=4)))
        meas = Pose(s.p + rng.normal(0, 0.1, 3), s.r * UnitRotation.from_rotvec(rng.normal(0, 0.3, 3)))
        H = pose_jacobian(s, meas)
        eps = 1e-6
        num = np.zeros((6, 15))
        for i in range(15):
            d = np.zeros(15)
            d[i] = eps
            num[:, i] = -(pose_residual(s, meas, d) - pose_residual(s, meas, -d)) / (2 * eps)
        scale = max(1.0, np.abs(H).max())
        assert np.abs(num - H).max() / scale < 1e-6


def test_zero_noise_tracking_constant_velocity():
    dt = 0.01
    v = np.array([0.7, -0.4, 0.1])
    s = FilterState(v=v.copy())
    for k in range(1, 1001):
        s = predict(s, imu(), dt, ZERO_NOISE)
        s = update_pose(s, Pose(v * k * dt), _cov(1e-6))
    assert np.linalg.norm(s.p - v * 10.0) < 1e-6


def test_covariance_stays_psd_random_sequence(rng):
    s = FilterState()
    for k in range(5000):
        s = predict(s, imu(rng.normal(0, 0.5, 3), HOVER + rng.normal(0, 1.0, 3)), rng.uniform(1e-3, 0.02))
        if k % 5 == 0:
            s = update_pose(s, Pose(s.p + rng.normal(0, 0.05, 3), s.r), _cov(rng.uniform(1e-4, 1.0)))
        if k % 7 == 0:
            s = update_height(s, s.p[2] + rng.normal(0, 0.05), rng.uniform(1e-4, 1.0))
    np.testing.assert_allclose(s.P, s.P.T, atol=1e-12)
    assert np.linalg.eigvalsh(s.P).min() >= -1e-9


def test_filter_rebases_on_new_epoch(rng):
    f = LooselyCoupledFilter(FilterState())
    f.update(Pose((0.1, 0, 0)), _cov(1e-4), epoch=0)
    before = f.state.p.copy()
    f.update(Pose(), _cov(1e-4), epoch=1)
    assert f.resets == 1
    np.testing.assert_allclose(f.state.p, before, atol=1e-12)

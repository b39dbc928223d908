import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopsched.belief import JointBelief, RobotTruth, SensorParams, init_joint_belief
from coopsched.kinematics import (
    OdometryReading,
    process_noise_increment,
    propagate_covariance,
    propagate_estimate,
    step_truth,
    synthesize_odometry,
)
from conftest import random_belief, seeds

NOISELESS = SensorParams(sigma_v_coeff=0.0, sigma_phi=0.0, sigma_rho=0.0, sigma_theta=0.0, sigma_omega=0.0)


def test_step_truth_straight():
    s = step_truth(RobotTruth(0, 0, 0), 1.0, 0.0, 0.1)
    assert (s.x, s.y) == pytest.approx((0.1, 0.0))


def test_step_truth_zero_speed():
    s = step_truth(RobotTruth(2.0, -1.0, 0.7), 0.0, 0.3, 0.1)
    assert (s.x, s.y) == (2.0, -1.0)
    assert s.heading == pytest.approx(0.73)


def test_step_truth_heading_north():
    s = step_truth(RobotTruth(0, 0, math.pi / 2), 0.1, 0.0, 0.1)
    assert (s.x, s.y) == pytest.approx((0.0, 0.01), abs=1e-15)


def test_step_truth_rejects_bad_dt():
    with pytest.raises(ValueError):
        step_truth(RobotTruth(0, 0, 0), 1.0, 0.0, 0.0)


def test_noiseless_odometry():
    o = synthesize_odometry(RobotTruth(0, 0, 1.2), 0.1, NOISELESS, np.random.default_rng(0))
    assert o.v_m == 0.1 and o.phi_m == pytest.approx(1.2) and o.dt == 0.1


def test_odometry_statistics():
    rng = np.random.default_rng(1)
    p = SensorParams()
    draws = [synthesize_odometry(RobotTruth(0, 0, 0.5), 0.1, p, rng) for _ in range(100_000)]
    v = np.array([o.v_m for o in draws])
    phi = np.array([o.phi_m for o in draws])
    se = 2.253 * 0.1 / math.sqrt(len(v))
    assert abs(v.mean() - 0.1) < 3 * se
    assert phi.std() == pytest.approx(0.0349, rel=0.05)


def test_odometry_saturates_at_v_max():
    p = SensorParams(v_max=0.15)
    rng = np.random.default_rng(2)
    v = [synthesize_odometry(RobotTruth(0, 0, 0), 0.1, p, rng).v_m for _ in range(2000)]
    assert max(v) == 0.15 and min(v) == -0.15


def test_propagate_estimate_examples():
    np.testing.assert_array_equal(propagate_estimate([1, 1], OdometryReading(0.0, 0.4, 0.1)), [1, 1])
    np.testing.assert_allclose(propagate_estimate([0, 0], OdometryReading(0.1, 0.0, 0.1)), [0.01, 0.0])


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 7), st.floats(0, 1), st.floats(0.01, 1))
def test_propagate_estimate_matches_noiseless_truth(x, y, phi, v, dt):
    s = RobotTruth(x, y, phi)
    o = synthesize_odometry(s, v, NOISELESS, np.random.default_rng(0), dt)
    truth = step_truth(s, v, 0.0, dt)
    np.testing.assert_allclose(propagate_estimate([x, y], o), [truth.x, truth.y], atol=1e-12)


def test_process_noise_reference_values():
    q = process_noise_increment(OdometryReading(0.1, 0.0, 0.1), SensorParams())
    np.testing.assert_allclose(q, np.diag([5.076009e-4, 1.21801e-7]), rtol=1e-12, atol=1e-20)


@given(st.floats(-1, 1), st.floats(-10, 10))
def test_process_noise_trace_rotation_invariant(v, phi):
    p = SensorParams()
    a = process_noise_increment(OdometryReading(v, 0.0, 0.1), p)
    b = process_noise_increment(OdometryReading(v, phi, 0.1), p)
    assert np.trace(b) == pytest.approx(np.trace(a), rel=1e-12, abs=1e-30)
    np.testing.assert_allclose(b, b.T, rtol=0, atol=0)
    assert np.linalg.eigvalsh(b)[0] >= -1e-18


def test_process_noise_zero_speed_without_floor():
    p = SensorParams(sigma_v_floor=0.0)
    np.testing.assert_array_equal(process_noise_increment(OdometryReading(0.0, 0.8, 0.1), p), np.zeros((2, 2)))


def test_process_noise_floor_keeps_definite():
    q = process_noise_increment(OdometryReading(0.0, 0.3, 0.1), SensorParams())
    assert np.trace(q) == pytest.approx((0.1 * 1e-6) ** 2)


def test_propagate_zero_increment_unchanged():
    b = random_belief(np.random.default_rng(3), 3)
    out = propagate_covariance(b, [np.zeros((2, 2))] * 3)
    np.testing.assert_array_equal(out.covariance, b.covariance)
    assert out.timestep == b.timestep + 1


def test_propagate_single_robot_addition():
    b = init_joint_belief(1, [[0, 0]], 0.01 * np.eye(2))
    out = propagate_covariance(b, [5.076009e-4 * np.eye(2)])
    np.testing.assert_allclose(out.covariance, 0.0105076009 * np.eye(2), rtol=1e-14)


@given(seeds)
def test_propagate_leaves_cross_blocks_bitwise(seed):
    rng = np.random.default_rng(seed)
    b = random_belief(rng, 4)
    qs = [process_noise_increment(OdometryReading(float(rng.uniform(-1, 1)), float(rng.uniform(0, 6)), 0.1),
                                  SensorParams()) for _ in range(4)]
    out = propagate_covariance(b, qs)
    mask = ~np.kron(np.eye(4, dtype=bool), np.ones((2, 2), dtype=bool))
    np.testing.assert_array_equal(out.covariance[mask], b.covariance[mask])
    for i in range(4):
        s = slice(2 * i, 2 * i + 2)
        np.testing.assert_allclose(out.covariance[s, s], b.covariance[s, s] + qs[i], rtol=0, atol=1e-16)


def test_propagate_rejects_bad_increment():
    b = init_joint_belief(2, np.zeros((2, 2)), np.eye(2))
    with pytest.raises(ValueError):
        propagate_covariance(b, [np.eye(2), np.diag([-1.0, 1.0])])
    with pytest.raises(ValueError):
        propagate_covariance(b, [np.eye(2)])

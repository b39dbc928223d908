import math

import numpy as np
import pytest
from hypothesis import given

from coopsched.belief import JointBelief, SensorParams, check_validity, init_joint_belief
from coopsched.fusion import canonical_order, ekf_update_single, inverse_2x2, sequential_update
from coopsched.sensing import (
    RelativeMeasurement,
    measurement_noise_covariance,
    predicted_measurement,
    rotation_matrix,
)
from conftest import gram, random_belief, seeds


def _h(n, a, b, phi):
    ct = rotation_matrix(phi).T
    h = np.zeros((2, 2 * n))
    h[:, 2 * (a - 1):2 * a] = -ct
    h[:, 2 * (b - 1):2 * b] = ct
    return h


def _random_measurement(rng, n):
    a, b = (int(v) + 1 for v in rng.choice(n, 2, replace=False))
    return RelativeMeasurement(a, b, 0, float(rng.uniform(0.2, 8)), float(rng.uniform(-math.pi, math.pi)))


def test_information_form_two_robots():
    params = SensorParams(sigma_phi=0.0)
    b = init_joint_belief(2, [[0, 0], [1, 0.5]], 0.01 * np.eye(2))
    m = RelativeMeasurement(1, 2, 0, 1.2, 0.3)
    post, _ = ekf_update_single(b, m, [0.0, 0.0], params)
    r_z, _ = measurement_noise_covariance(m, b.estimates[0], b.estimates[1], 0.0, params)
    h = _h(2, 1, 2, 0.0)
    oracle = np.linalg.inv(np.linalg.inv(b.covariance) + h.T @ np.linalg.solve(r_z, h))
    np.testing.assert_allclose(post.covariance, oracle, rtol=1e-10, atol=1e-16)


@given(seeds)
def test_information_form_random(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    b = random_belief(rng, n)
    m = _random_measurement(rng, n)
    headings = list(rng.uniform(0, 2 * math.pi, n))
    params = SensorParams()
    post, rec = ekf_update_single(b, m, headings, params)
    a, t = m.observer, m.target
    r_z, r_phi = measurement_noise_covariance(m, b.estimates[a - 1], b.estimates[t - 1], headings[a - 1], params)
    r = r_z + r_phi
    h = _h(n, a, t, headings[a - 1])
    info = np.linalg.inv(b.covariance) + h.T @ np.linalg.solve(r, h)
    p_post = np.linalg.inv(info)
    np.testing.assert_allclose(post.covariance, p_post, rtol=1e-7, atol=1e-10)
    x_post = b.estimates.reshape(-1) + p_post @ h.T @ np.linalg.solve(r, rec.innovation)
    np.testing.assert_allclose(post.estimates.reshape(-1), x_post, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(rec.innovation_cov, h @ b.covariance @ h.T + r, rtol=1e-10, atol=1e-14)


def test_zero_cross_covariance_robot_untouched():
    rng = np.random.default_rng(4)
    p = gram(rng, 6, 0.05)
    p[4:, :4] = 0.0
    p[:4, 4:] = 0.0
    b = JointBelief(3, rng.uniform(0, 5, (3, 2)), p)
    post, rec = ekf_update_single(b, RelativeMeasurement(1, 2, 0, 2.0, 0.4), [0.1, 0.2, 0.3], SensorParams())
    np.testing.assert_array_equal(rec.gain(3), np.zeros((2, 2)))
    np.testing.assert_array_equal(post.estimates[2], b.estimates[2])
    np.testing.assert_array_equal(post.covariance[4:, :], b.covariance[4:, :])
    np.testing.assert_array_equal(post.covariance[:, 4:], b.covariance[:, 4:])


def test_logdet_never_increases_sweep():
    rng = np.random.default_rng(2024)
    params = SensorParams()
    worst = -math.inf
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        b = JointBelief(n, rng.uniform(-10, 10, (n, 2)), gram(rng, 2 * n, 10 ** rng.uniform(-3, 1)))
        post, rec = ekf_update_single(b, _random_measurement(rng, n), list(rng.uniform(0, 7, n)), params)
        assert not rec.skipped
        worst = max(worst, rec.logdet_post - rec.logdet_pre)
        assert check_validity(post).ok
    assert worst <= 1e-9


def test_singular_innovation_is_skipped():
    params = SensorParams(sigma_phi=0.0, sigma_rho=0.0, sigma_theta=0.0)
    b = init_joint_belief(2, [[0, 0], [1, 0]], np.zeros((2, 2)))
    post, rec = ekf_update_single(b, RelativeMeasurement(1, 2, 0, 1.0, 0.0), [0.0, 0.0], params)
    assert rec.skipped and rec.gains is None
    assert post is b


def test_self_measurement_rejected():
    b = init_joint_belief(2, np.zeros((2, 2)), np.eye(2))
    m = RelativeMeasurement(1, 2, 0, 1.0, 0.0)
    object.__setattr__(m, "target", 1)
    with pytest.raises(ValueError):
        ekf_update_single(b, m, [0.0, 0.0], SensorParams())


def test_per_robot_params():
    rng = np.random.default_rng(8)
    b = random_belief(rng, 3)
    m = RelativeMeasurement(2, 3, 0, 3.0, 0.2)
    loud = SensorParams(sigma_rho=1.0)
    same, _ = ekf_update_single(b, m, [0, 0, 0], [loud, SensorParams(), loud])
    ref, _ = ekf_update_single(b, m, [0, 0, 0], SensorParams())
    np.testing.assert_array_equal(same.covariance, ref.covariance)


def test_inverse_2x2():
    s = np.array([[2.0, 0.5], [0.5, 1.0]])
    inv, cond = inverse_2x2(s)
    np.testing.assert_allclose(inv @ s, np.eye(2), atol=1e-15)
    assert cond == pytest.approx(np.linalg.cond(s))
    assert inverse_2x2(np.zeros((2, 2)))[1] == math.inf


def test_sequential_empty():
    b = random_belief(np.random.default_rng(1), 3)
    out, records = sequential_update(b, [], [0, 0, 0], SensorParams())
    assert out is b and records == []


def test_sequential_single_equals_single_update():
    rng = np.random.default_rng(2)
    b = random_belief(rng, 3)
    m = RelativeMeasurement(1, 3, 0, 2.5, -0.4)
    seq, records = sequential_update(b, [m], [0.3, 0.1, 0.2], SensorParams())
    one, rec = ekf_update_single(b, m, [0.3, 0.1, 0.2], SensorParams())
    np.testing.assert_array_equal(seq.covariance, one.covariance)
    np.testing.assert_array_equal(seq.estimates, one.estimates)
    assert len(records) == 1 and records[0].logdet_post == rec.logdet_post


def _consistent_pair(b, headings, noise):
    ms = [predicted_measurement(b.estimates[a - 1], b.estimates[t - 1], headings[a - 1], observer=a, target=t)
          for a, t in [(1, 2), (3, 4)]]
    return [RelativeMeasurement(m.observer, m.target, 0, m.rho_m + noise * s, m.theta_m - 0.5 * noise * s)
            for m, s in zip(ms, (1.0, -2.0))]


def test_sequential_order_exact_at_zero_innovation():
    # nothing moves the estimates, so the information adds and the order cannot matter
    b = random_belief(np.random.default_rng(3), 4, scale=0.01)
    headings = [0.2, 1.0, 2.0, 3.0]
    ms = _consistent_pair(b, headings, 0.0)
    fwd, _ = sequential_update(b, ms, headings, SensorParams())
    rev, _ = sequential_update(b, ms[::-1], headings, SensorParams())
    assert fwd.logdet == pytest.approx(rev.logdet, rel=1e-12)


def test_sequential_order_nearly_commutes():
    # filter-scale covariance, readings off by sensor-sized noise
    b = random_belief(np.random.default_rng(3), 4, scale=0.001)
    headings = [0.2, 1.0, 2.0, 3.0]
    ms = _consistent_pair(b, headings, 0.01)
    fwd, _ = sequential_update(b, ms, headings, SensorParams())
    rev, _ = sequential_update(b, ms[::-1], headings, SensorParams())
    assert fwd.logdet == pytest.approx(rev.logdet, rel=1e-6)


def test_sequential_rejects_mixed_timesteps():
    b = random_belief(np.random.default_rng(5), 3)
    ms = [RelativeMeasurement(1, 2, 0, 1.0, 0.0), RelativeMeasurement(2, 3, 1, 1.0, 0.0)]
    with pytest.raises(ValueError):
        sequential_update(b, ms, [0, 0, 0], SensorParams())


def test_sequential_record_chain():
    rng = np.random.default_rng(6)
    b = random_belief(rng, 4)
    ms = canonical_order([RelativeMeasurement(a, t, 0, 2.0, 0.1) for a, t in [(3, 1), (1, 4), (1, 2)]])
    assert [(m.observer, m.target) for m in ms] == [(1, 2), (1, 4), (3, 1)]
    out, records = sequential_update(b, ms, [0.0] * 4, SensorParams())
    assert records[0].logdet_pre == pytest.approx(b.logdet)
    for prev, nxt in zip(records, records[1:]):
        assert nxt.logdet_pre == prev.logdet_post
    assert records[-1].logdet_post == pytest.approx(out.logdet)

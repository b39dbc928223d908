"""Unicycle ground truth, odometry synthesis and dead-reckoning propagation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from coopsched.belief import JointBelief, RobotTruth, SensorParams, block_slice, is_psd
from coopsched.sensing import rotated_diag


@dataclass(frozen=True)
class OdometryReading:
    """Encoder speed and compass heading read at one step."""

    v_m: float
    phi_m: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")


def step_truth(s: RobotTruth, v: float, omega: float, dt: float) -> RobotTruth:
    """Advance the true pose one step; position uses the heading at the start of the step."""
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    return RobotTruth(
        s.x + dt * v * math.cos(s.heading),
        s.y + dt * v * math.sin(s.heading),
        s.heading + dt * omega,
    )


def synthesize_odometry(s: RobotTruth, v: float, params: SensorParams,
                        rng: np.random.Generator, dt: float = 0.1) -> OdometryReading:
    """Noisy encoder speed and compass heading for a robot commanded at speed ``v``.

    The encoder noise std is ``sigma_v_coeff * |v|`` (true speed); the reading
    saturates at ``+-v_max`` since the encoder cannot report speeds beyond the
    platform limit.
    """
    eta_v, eta_phi = rng.standard_normal(2)
    v_m = v + params.sigma_v_coeff * abs(v) * eta_v
    v_m = min(max(v_m, -params.v_max), params.v_max)
    return OdometryReading(v_m, s.heading + params.sigma_phi * eta_phi, dt)


def propagate_estimate(x_hat, o: OdometryReading) -> np.ndarray:
    x_hat = np.asarray(x_hat, dtype=float)
    return x_hat + o.dt * o.v_m * np.array([math.cos(o.phi_m), math.sin(o.phi_m)])


def process_noise_increment(o: OdometryReading, params: SensorParams) -> np.ndarray:
    """Covariance added to a robot's own block by one dead-reckoning step."""
    return rotated_diag(o.phi_m, (o.dt * params.sigma_v(o.v_m)) ** 2,
                        (o.dt * o.v_m * params.sigma_phi) ** 2)


def propagate_covariance(b: JointBelief, increments: Sequence[np.ndarray],
                         estimates=None) -> JointBelief:
    """Add each robot's increment to its diagonal block; cross blocks are left untouched.

    ``estimates`` optionally carries the dead-reckoned positions so the
    propagated belief is produced in one step. The timestep advances by one.
    """
    if len(increments) != b.n_robots:
        raise ValueError(f"expected {b.n_robots} increments, got {len(increments)}")
    cov = b.covariance.copy()
    for i, q in enumerate(increments, start=1):
        q = np.asarray(q, dtype=float)
        if q.shape != (2, 2) or not is_psd(q):
            raise ValueError(f"process noise increment for robot {i} is not a symmetric PSD 2x2 matrix")
        cov[block_slice(i), block_slice(i)] += q
    return b.replace(covariance=cov, estimates=estimates, timestep=b.timestep + 1)

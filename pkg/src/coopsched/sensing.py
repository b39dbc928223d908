"""Relative range/bearing measurements between robots and their linearization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from coopsched.belief import RobotTruth, SensorParams

# d/dphi of C(phi)^T applied to a vector is C(phi)^T J with this J
J = np.array([[0.0, 1.0], [-1.0, 0.0]])

S_SYMMETRY_RTOL = 1e-9


class FilterCorruptionError(RuntimeError):
    """An internal quantity lost a structural property it must always have."""


def rotation_matrix(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def wrap_pi(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.atan2(math.sin(angle), math.cos(angle))
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class RelativeMeasurement:
    """Observation of robot ``target`` by robot ``observer`` in the observer's body frame."""

    observer: int
    target: int
    timestep: int
    rho_m: float
    theta_m: float
    z: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.rho_m < 0.0:
            raise ValueError(f"rho_m must be >= 0, got {self.rho_m!r}")
        if self.observer == self.target:
            raise ValueError("a robot cannot observe itself")
        z = self.rho_m * np.array([math.cos(self.theta_m), math.sin(self.theta_m)])
        z.flags.writeable = False
        object.__setattr__(self, "z", z)


def true_range_bearing(a: RobotTruth, b: RobotTruth) -> tuple[float, float]:
    dx, dy = b.x - a.x, b.y - a.y
    return math.hypot(dx, dy), wrap_pi(math.atan2(dy, dx) - a.heading)


def generate_measurement(a: RobotTruth, b: RobotTruth, params: SensorParams,
                         rng: np.random.Generator, *, observer: int = 1, target: int = 2,
                         timestep: int = 0) -> RelativeMeasurement | None:
    """Noisy range/bearing of ``b`` seen from ``a``; ``None`` when ``b`` is beyond ``rho_max``.

    The zone test uses the true range. Noise is drawn even for out-of-zone
    pairs so the generator advances identically whatever the geometry.
    """
    rho, theta = true_range_bearing(a, b)
    eta_rho, eta_theta = rng.standard_normal(2)
    if rho > params.rho_max:
        return None
    rho_m = max(rho + params.sigma_rho * eta_rho, 0.0)
    theta_m = wrap_pi(theta + params.sigma_theta * eta_theta)
    return RelativeMeasurement(observer, target, timestep, rho_m, theta_m)


def predicted_measurement(x_a, x_b, phi_a: float, *, observer: int, target: int,
                          timestep: int = 0) -> RelativeMeasurement:
    """Noise-free measurement expected from the current estimates (zero innovation)."""
    d = np.asarray(x_b, dtype=float) - np.asarray(x_a, dtype=float)
    return RelativeMeasurement(observer, target, timestep, float(math.hypot(d[0], d[1])),
                               wrap_pi(math.atan2(d[1], d[0]) - phi_a))


def innovation_and_jacobians(m: RelativeMeasurement, x_a, x_b, phi_a: float):
    """Innovation ``z - C^T(phi_a)(x_b - x_a)`` and the Jacobians w.r.t. ``x_a`` and ``x_b``."""
    ct = rotation_matrix(phi_a).T
    d = np.asarray(x_b, dtype=float) - np.asarray(x_a, dtype=float)
    return m.z - ct @ d, -ct, ct


def rotated_diag(phi: float, along: float, across: float) -> np.ndarray:
    """``C(phi) diag(along, across) C(phi)^T``."""
    c, s = math.cos(phi), math.sin(phi)
    xy = (along - across) * c * s
    return np.array([[along * c * c + across * s * s, xy], [xy, along * s * s + across * c * c]])


def measurement_noise_covariance(m: RelativeMeasurement, x_a, x_b, phi_a: float,
                                 params: SensorParams) -> tuple[np.ndarray, np.ndarray]:
    """Sensor noise ``R_z`` and the compass-induced term ``R_phi`` (rank one).

    ``params`` are the observer's parameters.
    """
    r_z = rotated_diag(m.theta_m, params.sigma_rho ** 2, (m.rho_m * params.sigma_theta) ** 2)
    dx = float(x_b[0]) - float(x_a[0])
    dy = float(x_b[1]) - float(x_a[1])
    # u = C^T(phi_a) J d with J d = (dy, -dx)
    c, s = math.cos(phi_a), math.sin(phi_a)
    u0 = c * dy - s * dx
    u1 = -s * dy - c * dx
    k = params.sigma_phi ** 2
    r_phi = np.array([[k * u0 * u0, k * u0 * u1], [k * u0 * u1, k * u1 * u1]])
    return r_z, r_phi


def innovation_covariance(h_a, h_b, p_aa, p_ab, p_ba, p_bb, r_z, r_phi) -> np.ndarray:
    s = (h_a @ p_aa @ h_a.T + h_a @ p_ab @ h_b.T + h_b @ p_bb @ h_b.T
         + h_b @ p_ba @ h_a.T + r_phi + r_z)
    return checked_symmetric(s)


def checked_symmetric(s: np.ndarray) -> np.ndarray:
    """Symmetrized copy of a 2x2 innovation covariance; raises if the asymmetry is not round-off."""
    scale = max(float(np.abs(s).max()), 1e-300)
    if abs(s[0, 1] - s[1, 0]) > S_SYMMETRY_RTOL * scale:
        raise FilterCorruptionError(f"innovation covariance is not symmetric: {s.tolist()}")
    return (s + s.T) / 2.0

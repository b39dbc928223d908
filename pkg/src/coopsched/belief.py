"""Joint belief of a planar robot team and the shared per-robot parameter types.

The joint covariance is one dense ``2N x 2N`` array; robot ``i`` (1-based)
owns rows/columns ``2(i-1):2i``. Every operation returns a new belief.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * math.pi

SYMMETRY_RTOL = 1e-9
PSD_RTOL = 1e-9


def normalize_angle(phi: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    phi = math.fmod(phi, TWO_PI)
    if phi < 0.0:
        phi += TWO_PI
    # fmod of a tiny negative value can round up to exactly 2*pi
    return 0.0 if phi >= TWO_PI else phi


def block_slice(i: int) -> slice:
    return slice(2 * (i - 1), 2 * i)


def logdet(matrix: np.ndarray) -> float:
    """Log-determinant via LU factorization; ``-inf`` for singular or indefinite input."""
    sign, value = np.linalg.slogdet(matrix)
    if sign <= 0:
        return -math.inf
    return float(value)


@dataclass(frozen=True)
class RobotTruth:
    """Ground-truth planar pose of one robot."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class SensorParams:
    """Noise levels and physical limits of one robot.

    Defaults are the wheel-encoder, compass and range/bearing figures used
    throughout the Monte Carlo study. ``sigma_v_coeff`` scales with speed:
    the encoder noise standard deviation is ``sigma_v_coeff * |v|``, floored
    at ``sigma_v_floor`` inside the filter so the odometry covariance never
    collapses when a robot stands still.

    ``sigma_omega`` is carried for truth-side experiments only; the filter
    takes heading from the compass and never consumes angular velocity.
    """

    sigma_v_coeff: float = 2.253
    sigma_phi: float = 0.0349
    sigma_rho: float = 0.147
    sigma_theta: float = 0.1
    sigma_omega: float = 0.587
    v_max: float = 1.0
    rho_max: float = 10.0
    sigma_v_floor: float = 1e-6

    def __post_init__(self):
        for name in ("sigma_v_coeff", "sigma_phi", "sigma_rho", "sigma_theta",
                     "sigma_omega", "sigma_v_floor"):
            value = getattr(self, name)
            if not (value >= 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite value >= 0, got {value!r}")
        if not self.v_max > 0.0:
            raise ValueError(f"v_max must be > 0, got {self.v_max!r}")
        if not self.rho_max > 0.0:
            raise ValueError(f"rho_max must be > 0, got {self.rho_max!r}")

    def sigma_v(self, speed: float) -> float:
        """Filter-side encoder noise std at the given speed (floored)."""
        return max(self.sigma_v_coeff * abs(speed), self.sigma_v_floor)

    @cached_property
    def r_c(self) -> float:
        from coopsched.bounds import r_scalar_bound

        return r_scalar_bound(self)


@dataclass(frozen=True)
class ValidityReport:
    symmetry_residual: float
    min_eigenvalue: float
    max_eigenvalue: float
    symmetric: bool
    psd: bool
    diagonal_blocks_psd: bool

    @property
    def ok(self) -> bool:
        return self.symmetric and self.psd and self.diagonal_blocks_psd


@dataclass(frozen=True, eq=False)
class JointBelief:
    """Stacked position estimates plus the joint ``2N x 2N`` covariance.

    ``estimates`` has shape ``(N, 2)``; row ``i - 1`` belongs to robot ``i``.
    Arrays are made read-only so that a belief can be shared freely between
    runs; use :meth:`replace` to derive a modified copy.
    """

    n_robots: int
    estimates: np.ndarray
    covariance: np.ndarray
    timestep: int = 0

    def __post_init__(self):
        if self.n_robots < 1:
            raise ValueError("n_robots must be >= 1")
        est = np.array(self.estimates, dtype=float).reshape(self.n_robots, 2)
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (2 * self.n_robots, 2 * self.n_robots):
            raise ValueError(f"covariance must be {2 * self.n_robots}x{2 * self.n_robots}, got {cov.shape}")
        if self.timestep < 0:
            raise ValueError("timestep must be >= 0")
        est.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "covariance", cov)

    def replace(self, *, estimates=None, covariance=None, timestep=None) -> JointBelief:
        return JointBelief(
            self.n_robots,
            self.estimates if estimates is None else estimates,
            self.covariance if covariance is None else covariance,
            self.timestep if timestep is None else timestep,
        )

    def estimate(self, i: int) -> np.ndarray:
        _check_id(self, i)
        return self.estimates[i - 1].copy()

    @property
    def logdet(self) -> float:
        return logdet(self.covariance)


def _check_id(b: JointBelief, i: int) -> None:
    if not (isinstance(i, (int, np.integer)) and 1 <= i <= b.n_robots):
        raise IndexError(f"robot id {i!r} out of range 1..{b.n_robots}")


def is_psd(matrix: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    m = np.asarray(matrix, dtype=float)
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if m.shape == (2, 2):
        (a, b), (c, d) = m.tolist()
        if abs(b - c) > rtol * scale:
            return False
        lo, hi = _eig2(a, b, d)
        return lo >= -rtol * max(abs(hi), 1e-300)
    if not np.allclose(m, m.T, rtol=0.0, atol=rtol * scale):
        return False
    eig = np.linalg.eigvalsh(m)
    return bool(eig[0] >= -rtol * max(abs(eig[-1]), 1e-300))


def _eig2(a, b, d):
    """Eigenvalues (ascending) of the symmetric 2x2 matrix [[a, b], [b, d]]; works elementwise."""
    mid = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    return mid - rad, mid + rad


def init_joint_belief(n: int, init_positions, init_block_diag) -> JointBelief:
    """Fresh belief: every diagonal block equals ``init_block_diag``, no cross-covariance."""
    if n < 1:
        raise ValueError("n must be >= 1")
    block = np.asarray(init_block_diag, dtype=float)
    if block.shape != (2, 2):
        raise ValueError(f"init_block_diag must be 2x2, got {block.shape}")
    if not is_psd(block):
        raise ValueError(f"init_block_diag is not symmetric PSD: eigenvalues {np.linalg.eigvals(block)}")
    positions = np.asarray(init_positions, dtype=float)
    if positions.shape != (n, 2):
        raise ValueError(f"expected {n} initial positions of length 2, got shape {positions.shape}")
    return JointBelief(n, positions, np.kron(np.eye(n), block), 0)


def block_at(b: JointBelief, i: int, j: int) -> np.ndarray:
    """Copy of the 2x2 block P_ij."""
    _check_id(b, i)
    _check_id(b, j)
    return b.covariance[block_slice(i), block_slice(j)].copy()


def check_validity(b: JointBelief, rtol: float = PSD_RTOL) -> ValidityReport:
    cov = b.covariance
    scale = float(np.abs(cov).max(initial=0.0))
    residual = float(np.abs(cov - cov.T).max(initial=0.0))
    eig = np.linalg.eigvalsh((cov + cov.T) / 2.0)
    lo, hi = float(eig[0]), float(eig[-1])
    symmetric = residual <= SYMMETRY_RTOL * scale
    psd = lo >= -rtol * max(abs(hi), 1e-300)
    n = b.n_robots
    blk = np.diagonal(cov.reshape(n, 2, n, 2), axis1=0, axis2=2)  # (2, 2, n)
    lo_b, hi_b = _eig2(blk[0, 0], 0.5 * (blk[0, 1] + blk[1, 0]), blk[1, 1])
    blocks_ok = bool(np.all(lo_b >= -rtol * np.maximum(np.abs(hi_b), 1e-300))
                     and np.all(np.abs(blk[0, 1] - blk[1, 0]) <= SYMMETRY_RTOL * scale))
    return ValidityReport(residual, lo, hi, symmetric, psd, blocks_ok)

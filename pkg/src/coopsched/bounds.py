"""Upper bounds on the joint covariance and its determinant.

The bound recursion replaces the odometry increment by a constant matrix
and every relative measurement by an isotropic one with variance ``r_c``
expressed directly in world coordinates. Started from the filter's initial
covariance it dominates the filter covariance in the PSD order, which gives
a determinant bound that only needs the observer's own blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from coopsched.belief import SensorParams, block_slice, is_psd, logdet
from coopsched.sensing import J

LEMMA_RTOL = 1e-10


class PreconditionError(ValueError):
    pass


def q_constant_bound(params: SensorParams, dt: float) -> np.ndarray:
    """Constant isotropic matrix dominating every odometry increment with ``|v_m| <= v_max``."""
    sv = params.sigma_v_coeff * params.v_max
    return dt ** 2 * max(sv ** 2, (params.v_max * params.sigma_phi) ** 2) * np.eye(2)


def r_scalar_bound(params: SensorParams) -> float:
    """Scalar dominating the world-frame measurement noise for ranges up to ``rho_max``."""
    return (params.sigma_rho ** 2 + params.sigma_phi ** 2 * params.rho_max ** 2
            + params.sigma_theta ** 2 * params.rho_max ** 2)


def r_c_ab(x_a, x_b, params: SensorParams) -> np.ndarray:
    """Orientation-free measurement noise matrix for the pair built from the estimates.

    ``D = diag(J (x_b - x_a))``; the matrix is
    ``s_rho^2 I - D diag(s_rho^2 / rho^2) D^T + s_theta^2 D D^T + s_phi^2 D 1 D^T``.
    """
    d = np.asarray(x_b, dtype=float) - np.asarray(x_a, dtype=float)
    rho2 = float(d @ d)
    dm = np.diag(J @ d)
    sr2 = params.sigma_rho ** 2
    out = sr2 * np.eye(2) + params.sigma_theta ** 2 * dm @ dm.T + params.sigma_phi ** 2 * dm @ np.ones((2, 2)) @ dm.T
    if rho2 > 0.0:
        out -= dm @ (sr2 / rho2 * np.eye(2)) @ dm.T
    return out


def bound_measurement_matrix(n: int, a: int, b: int) -> np.ndarray:
    """``[0 .. -I (at a) .. I (at b) .. 0]``, shape (2, 2n)."""
    h = np.zeros((2, 2 * n))
    h[:, block_slice(a)] = -np.eye(2)
    h[:, block_slice(b)] = np.eye(2)
    return h


def _check_pair(p: np.ndarray, a: int, b: int) -> int:
    n = p.shape[0] // 2
    if p.shape != (2 * n, 2 * n):
        raise ValueError(f"expected a square even-sized matrix, got {p.shape}")
    if a == b or not (1 <= a <= n and 1 <= b <= n):
        raise ValueError(f"invalid robot pair ({a}, {b}) for N={n}")
    return n


def info_form_bounded_update(p_check: np.ndarray, a: int, b: int, r_c: float) -> np.ndarray:
    """Bounded posterior ``((P^-)^-1 + H^T H / r_c)^-1`` as a rank-2 downdate.

    Equivalent to ``P - P H^T (r_c I + H P H^T)^-1 H P`` with ``H`` from
    :func:`bound_measurement_matrix`; only rows ``a`` and ``b`` of ``P`` enter.
    """
    p = np.asarray(p_check, dtype=float)
    _check_pair(p, a, b)
    if not r_c > 0.0:
        raise ValueError(f"r_c must be > 0, got {r_c!r}")
    try:
        np.linalg.cholesky((p + p.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("bounded covariance is not positive definite") from exc
    hp = p[block_slice(b), :] - p[block_slice(a), :]
    inner = r_c * np.eye(2) + hp[:, block_slice(b)] - hp[:, block_slice(a)]
    out = p - hp.T @ np.linalg.solve(inner, hp)
    return (out + out.T) / 2.0


def info_form_bounded_update_dense(p_check: np.ndarray, a: int, b: int, r_c: float) -> np.ndarray:
    """Reference path: invert, add information, invert back."""
    p = np.asarray(p_check, dtype=float)
    n = _check_pair(p, a, b)
    h = bound_measurement_matrix(n, a, b)
    out = np.linalg.inv(np.linalg.inv(p) + h.T @ h / r_c)
    return (out + out.T) / 2.0


def score_trace_term(p_aa: np.ndarray, p_ab: np.ndarray) -> float:
    """``tr(P_aa + P_ba P_aa^-1 P_ab - P_ab - P_ba)`` with ``P_ba = P_ab^T``."""
    p_ba = p_ab.T
    return float(np.trace(p_aa + p_ba @ np.linalg.solve(p_aa, p_ab) - p_ab - p_ba))


@dataclass(frozen=True)
class DeterminantBound:
    value: float
    log_value: float
    denominator: float
    trace_term: float


def theorem1_rhs(p_check: np.ndarray, a: int, b: int, r_c: float) -> DeterminantBound:
    """Determinant bound for the posterior after measurement ``a -> b``.

    ``det(P) / (1 + tr(P_aa + P_ba P_aa^-1 P_ab - P_ab - P_ba) / r_c)``.
    """
    p = np.asarray(p_check, dtype=float)
    _check_pair(p, a, b)
    p_aa = p[block_slice(a), block_slice(a)]
    p_ab = p[block_slice(a), block_slice(b)]
    if np.linalg.det(p_aa) <= 0.0:
        raise np.linalg.LinAlgError(f"block P_{a}{a} is singular")
    tr = score_trace_term(p_aa, p_ab)
    denom = 1.0 + tr / r_c
    ld = logdet(p) - math.log(denom)
    return DeterminantBound(math.exp(ld), ld, denom, tr)


def lemma_a1_holds(a, rtol: float = LEMMA_RTOL) -> tuple[float, float, bool]:
    """``det(I + A) >= 1 + tr(A) > 0`` for symmetric PSD ``A``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not is_psd(a):
        raise PreconditionError("A must be a square symmetric PSD matrix")
    lhs = float(np.linalg.det(np.eye(a.shape[0]) + a))
    rhs = 1.0 + float(np.trace(a))
    return lhs, rhs, bool(lhs >= rhs - rtol * abs(rhs) and rhs > 0.0)


def lemma_a2_holds(a, b, c, rtol: float = LEMMA_RTOL) -> tuple[float, float, bool]:
    """``tr(A + C - B - B^T) >= tr(A + B A^-1 B^T - B - B^T) >= 0``.

    Requires ``A`` positive definite and ``[[A, B^T], [B, C]]`` PSD.
    """
    a, b, c = (np.asarray(m, dtype=float) for m in (a, b, c))
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n, n) or c.shape != (n, n):
        raise PreconditionError("A, B, C must be square matrices of equal size")
    if not is_psd(np.block([[a, b.T], [b, c]])):
        raise PreconditionError("[[A, B^T], [B, C]] must be symmetric PSD")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("A must be positive definite") from exc
    t1 = float(np.trace(a + c - b - b.T))
    t2 = float(np.trace(a + b @ np.linalg.solve(a, b.T) - b - b.T))
    scale = max(abs(t1), abs(t2), float(np.trace(a)), 1e-300)
    return t1, t2, bool(t1 >= t2 - rtol * scale and t2 >= -rtol * scale)


class BoundState:
    """Bound recursion run alongside a filter from the same initial covariance."""

    def __init__(self, initial_covariance: np.ndarray, params: Sequence[SensorParams], dt: float):
        self.covariance = np.array(initial_covariance, dtype=float)
        self.q_blocks = [q_constant_bound(p, dt) for p in params]
        self.r_c = [p.r_c for p in params]

    @property
    def n_robots(self) -> int:
        return len(self.q_blocks)

    def propagate(self) -> None:
        for i, q in enumerate(self.q_blocks, start=1):
            self.covariance[block_slice(i), block_slice(i)] += q

    def update(self, a: int, b: int) -> None:
        self.covariance = info_form_bounded_update(self.covariance, a, b, self.r_c[a - 1])

    @property
    def logdet(self) -> float:
        return logdet(self.covariance)

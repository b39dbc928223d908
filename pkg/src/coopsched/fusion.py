"""Joint EKF update for relative measurements, one at a time or sequentially."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from coopsched.belief import JointBelief, SensorParams, block_slice, logdet
from coopsched.sensing import (
    RelativeMeasurement,
    innovation_and_jacobians,
    checked_symmetric,
    measurement_noise_covariance,
)

log = logging.getLogger(__name__)

MAX_S_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class UpdateRecord:
    observer: int
    target: int
    timestep: int
    gains: np.ndarray | None  # (N, 2, 2), gains[i - 1] = K_i
    innovation: np.ndarray | None
    innovation_cov: np.ndarray | None
    logdet_pre: float
    logdet_post: float
    skipped: bool = False
    reason: str = ""

    def gain(self, i: int) -> np.ndarray:
        return self.gains[i - 1]


def inverse_2x2(s: np.ndarray) -> tuple[np.ndarray, float]:
    """Adjugate inverse of a symmetric 2x2 matrix and its 2-norm condition number."""
    a, b, c, d = float(s[0, 0]), float(s[0, 1]), float(s[1, 0]), float(s[1, 1])
    det = a * d - b * c
    half_tr = 0.5 * (a + d)
    disc = math.sqrt(max(half_tr * half_tr - det, 0.0))
    lo, hi = half_tr - disc, half_tr + disc
    cond = math.inf if lo <= 0.0 or det <= 0.0 else hi / lo
    if det == 0.0:
        return np.full((2, 2), math.nan), math.inf
    return np.array([[d, -b], [-c, a]]) / det, cond


def _param_for(params, i: int) -> SensorParams:
    if isinstance(params, SensorParams):
        return params
    return params[i - 1]


def ekf_update_single(b: JointBelief, m: RelativeMeasurement, headings: Sequence[float],
                      params, logdet_pre: float | None = None) -> tuple[JointBelief, UpdateRecord]:
    """Fuse one relative measurement into the joint belief.

    ``headings[i - 1]`` is robot ``i``'s compass reading at the measurement
    time; ``params`` is one :class:`SensorParams` shared by the team or a
    per-robot sequence. A numerically singular innovation covariance leaves
    the belief untouched and yields a record flagged ``skipped``.
    ``logdet_pre`` may pass in the already known log-determinant of ``b``.
    """
    a, t = m.observer, m.target
    if a == t:
        raise ValueError("observer and target must differ")
    n = b.n_robots
    sa, st = block_slice(a), block_slice(t)
    x = b.estimates
    p = b.covariance
    phi_a = headings[a - 1]
    pa = _param_for(params, a)
    pre = logdet(p) if logdet_pre is None else logdet_pre

    z_tilde, h_a, h_b = innovation_and_jacobians(m, x[a - 1], x[t - 1], phi_a)
    r_z, r_phi = measurement_noise_covariance(m, x[a - 1], x[t - 1], phi_a, pa)
    # P H^T for the whole team; its a and b rows also give H P H^T
    ph = p[:, sa] @ h_a.T + p[:, st] @ h_b.T
    s = checked_symmetric(h_a @ ph[sa] + h_b @ ph[st] + r_phi + r_z)
    s_inv, cond = inverse_2x2(s)
    if not cond <= MAX_S_CONDITION:
        log.warning("skipping measurement %d->%d at k=%d: cond(S)=%g", a, t, m.timestep, cond)
        return b, UpdateRecord(a, t, m.timestep, None, z_tilde, s, pre, pre, True,
                               f"innovation covariance condition {cond:.3g}")

    k = ph @ s_inv
    new_x = x + (k @ z_tilde).reshape(n, 2)
    new_p = p - k @ s @ k.T
    new_p = (new_p + new_p.T) / 2.0
    out = b.replace(estimates=new_x, covariance=new_p)
    return out, UpdateRecord(a, t, m.timestep, k.reshape(n, 2, 2), z_tilde, s, pre, logdet(new_p))


def canonical_order(measurements: Iterable[RelativeMeasurement]) -> list[RelativeMeasurement]:
    """Ascending observer id, then ascending target id."""
    return sorted(measurements, key=lambda m: (m.observer, m.target))


def sequential_update(b: JointBelief, measurements: Sequence[RelativeMeasurement],
                      headings: Sequence[float], params) -> tuple[JointBelief, list[UpdateRecord]]:
    """Apply measurements one by one in the given order, each against the part-updated belief.

    Every measurement is relinearized at the current estimates. Callers that
    want the reproducible processing order pass ``canonical_order(ms)``.
    """
    records = []
    k = None
    current_logdet = None
    for m in measurements:
        if k is None:
            k = m.timestep
        elif m.timestep != k:
            raise ValueError(f"measurements span timesteps {k} and {m.timestep}")
        b, rec = ekf_update_single(b, m, headings, params, current_logdet)
        current_logdet = rec.logdet_post
        records.append(rec)
    return b, records

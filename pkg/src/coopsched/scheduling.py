"""Landmark selection policies.

:func:`select_alg1` is the communication-free selector: it ranks candidates
by a trace score built from the observer's own covariance block and its
cross-covariances only, packaged in :class:`PolicyInput`. The log-det greedy
and brute-force selectors need the whole joint belief and serve as baseline
and oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from coopsched.belief import JointBelief, block_slice, logdet
from coopsched.fusion import canonical_order, ekf_update_single, sequential_update
from coopsched.sensing import RelativeMeasurement, predicted_measurement

SCORE_REGULARIZATION = 1e-12
BRUTE_FORCE_MAX_CANDIDATES = 8

POLICIES = ("alg1", "random", "logdet-greedy", "take-all", "brute-force")


@dataclass
class Schedule:
    timestep: int
    selections: dict[int, list[int]] = field(default_factory=dict)

    def pairs(self) -> list[tuple[int, int]]:
        return sorted((a, b) for a, bs in self.selections.items() for b in bs)


@dataclass(frozen=True, eq=False)
class PolicyInput:
    """Everything robot ``observer`` knows locally when picking landmarks."""

    observer: int
    candidates: tuple[int, ...]
    p_own: np.ndarray
    cross: Mapping[int, np.ndarray]
    q: int
    r_c: float

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("q must be >= 0")
        if self.observer in self.candidates:
            raise ValueError("observer listed among its own candidates")
        missing = set(self.candidates) - set(self.cross)
        if missing:
            raise ValueError(f"no cross-covariance for candidates {sorted(missing)}")


def policy_input(b: JointBelief, observer: int, candidates: Sequence[int], q: int,
                 r_c: float) -> PolicyInput:
    """Extract the observer-local blocks ``P_ii`` and ``{P_ij : j in candidates}``."""
    si = block_slice(observer)
    cov = b.covariance
    cands = tuple(sorted(candidates))
    cross = {j: cov[si, block_slice(j)].copy() for j in cands}
    return PolicyInput(observer, cands, cov[si, si].copy(), cross, q, r_c)


def score_landmark(inp: PolicyInput, j: int) -> float:
    """``tr(P_ii + P_ji P_ii^-1 P_ij - P_ij - P_ji) / r_c`` with a tiny ridge on ``P_ii``."""
    if j not in inp.cross:
        raise KeyError(f"robot {j} is not a candidate of robot {inp.observer}")
    # closed-form 2x2 arithmetic: this runs for every candidate of every observer each tick
    (a, b), (c, d) = inp.p_own.tolist()
    a += SCORE_REGULARIZATION
    d += SCORE_REGULARIZATION
    det = a * d - b * c
    (e, f), (g, h) = inp.cross[j].tolist()
    # X = P_ii^-1 P_ij; tr(P_ij^T X) = sum of elementwise products
    x00 = (d * e - b * g) / det
    x01 = (d * f - b * h) / det
    x10 = (a * g - c * e) / det
    x11 = (a * h - c * f) / det
    quad = e * x00 + f * x01 + g * x10 + h * x11
    return (a + d + quad - 2.0 * (e + h)) / inp.r_c


def alg1_scores(inp: PolicyInput) -> dict[int, float]:
    return {j: score_landmark(inp, j) for j in inp.candidates}


def select_alg1(inp: PolicyInput) -> list[int]:
    """Top-``q`` candidates by score (ties to the lower id); all candidates if ``q >= |D|``."""
    if inp.q >= len(inp.candidates):
        return list(inp.candidates)
    scores = alg1_scores(inp)
    ranked = sorted(inp.candidates, key=lambda j: (-scores[j], j))
    return ranked[:inp.q]


def select_take_all(inp: PolicyInput) -> list[int]:
    return list(inp.candidates)


def select_random(inp: PolicyInput, rng: np.random.Generator) -> list[int]:
    """Uniform ``q``-subset of the candidates, ascending."""
    if inp.q >= len(inp.candidates):
        return list(inp.candidates)
    picked = rng.choice(len(inp.candidates), size=inp.q, replace=False)
    return sorted(inp.candidates[i] for i in picked)


class RandomSelector:
    """Per-observer random selection held for ``period`` ticks, then redrawn.

    The held subset is intersected with the current candidates every tick.
    """

    def __init__(self, rng: np.random.Generator, period: int):
        if period < 1:
            raise ValueError("period must be >= 1 tick")
        self.rng = rng
        self.period = period
        self._held: dict[int, tuple[int, list[int]]] = {}

    def select(self, inp: PolicyInput, tick: int) -> list[int]:
        held = self._held.get(inp.observer)
        if held is None or tick - held[0] >= self.period:
            held = (tick, select_random(inp, self.rng))
            self._held[inp.observer] = held
        current = set(inp.candidates)
        return [j for j in held[1] if j in current]


def predicted_geometry(b: JointBelief, observer: int, candidates: Sequence[int],
                       headings: Sequence[float]) -> dict[int, RelativeMeasurement]:
    """Expected (zero-innovation) measurements used to evaluate candidate updates."""
    xa = b.estimates[observer - 1]
    return {j: predicted_measurement(xa, b.estimates[j - 1], headings[observer - 1],
                                     observer=observer, target=j, timestep=b.timestep)
            for j in candidates}


def select_logdet_greedy(observer: int, candidates: Sequence[int], q: int, b: JointBelief,
                         geometry: Mapping[int, RelativeMeasurement], headings: Sequence[float],
                         params) -> list[int]:
    """Greedy minimization of the joint log-determinant, one landmark at a time.

    Needs the full joint covariance. Each step simulates the joint EKF update
    of every remaining candidate on the part-updated belief and keeps the one
    with the smallest posterior log-determinant.
    """
    remaining = sorted(candidates)
    if q >= len(remaining):
        return remaining
    chosen: list[int] = []
    current = b
    current_logdet = logdet(current.covariance)
    for _ in range(q):
        best = None
        for j in remaining:
            post, rec = ekf_update_single(current, geometry[j], headings, params, current_logdet)
            if best is None or rec.logdet_post < best[0]:
                best = (rec.logdet_post, j, post)
        current_logdet, j, current = best
        chosen.append(j)
        remaining.remove(j)
    return chosen


def select_bruteforce(observer: int, candidates: Sequence[int], q: int, b: JointBelief,
                      geometry: Mapping[int, RelativeMeasurement], headings: Sequence[float],
                      params) -> tuple[list[int], float]:
    """Exhaustive search over subsets of size <= q for the smallest joint log-determinant.

    Only the observer's own measurements are applied. Ties go to the
    lexicographically smallest subset.
    """
    cands = sorted(candidates)
    if len(cands) > BRUTE_FORCE_MAX_CANDIDATES:
        raise ValueError(f"brute force refuses {len(cands)} candidates "
                         f"(limit {BRUTE_FORCE_MAX_CANDIDATES})")
    best: tuple[float, tuple[int, ...]] | None = None
    for size in range(min(q, len(cands)) + 1):
        for subset in itertools.combinations(cands, size):
            value = evaluate_subset(b, [geometry[j] for j in subset], headings, params)
            if best is None or (value, subset) < best:
                best = (value, subset)
    return list(best[1]), best[0]


def evaluate_subset(b: JointBelief, measurements: Sequence[RelativeMeasurement],
                    headings: Sequence[float], params) -> float:
    """Posterior joint log-determinant after applying ``measurements`` in canonical order."""
    post, _ = sequential_update(b, canonical_order(measurements), headings, params)
    return logdet(post.covariance)

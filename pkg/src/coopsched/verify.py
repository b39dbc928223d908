"""Randomized sweeps that check the determinant bound and the two trace/determinant lemmas."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from coopsched.belief import JointBelief, SensorParams
from coopsched.bounds import LEMMA_RTOL, lemma_a1_holds, lemma_a2_holds, theorem1_rhs
from coopsched.fusion import ekf_update_single
from coopsched.harness import ScenarioConfig, Window, run_scenario
from coopsched.sensing import RelativeMeasurement

BOUND_RTOL = 1e-9


@dataclass
class SweepResult:
    name: str
    instances: int = 0
    violations: list[str] = field(default_factory=list)
    worst_margin: float = math.inf  # smallest (rhs - lhs) seen, in the sweep's own units
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations and self.instances > 0

    def summary(self) -> str:
        state = "ok" if self.ok else f"{len(self.violations)} violations"
        return (f"{self.name}: {self.instances} instances, {state}, "
                f"worst margin {self.worst_margin:.3e}, {self.seconds:.2f} s")


def gram_pd(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    """``G G^T`` with unit-normal ``G`` of shape ``(n, rank)``; PD almost surely when ``rank >= n``."""
    g = rng.standard_normal((n, n if rank is None else rank))
    m = g @ g.T
    return (m + m.T) / 2.0


def random_bound_instance(rng: np.random.Generator, params: SensorParams):
    """A valid joint belief plus an in-range measurement between two of its robots."""
    n = int(rng.integers(2, 7))
    # scales from well below to well above r_c so both regimes of the bound are hit
    cov = gram_pd(rng, 2 * n) * 10.0 ** rng.uniform(-3.0, 1.0)
    a, b = (int(v) + 1 for v in rng.choice(n, size=2, replace=False))
    est = rng.uniform(-20.0, 20.0, size=(n, 2))
    # keep the estimated separation inside the sensing range
    direction = rng.uniform(0.0, 2.0 * math.pi)
    sep = rng.uniform(0.0, params.rho_max)
    est[b - 1] = est[a - 1] + sep * np.array([math.cos(direction), math.sin(direction)])
    headings = list(rng.uniform(0.0, 2.0 * math.pi, size=n))
    m = RelativeMeasurement(a, b, 0, float(rng.uniform(0.0, params.rho_max)),
                            float(rng.uniform(-math.pi, math.pi)))
    return JointBelief(n, est, cov, 0), m, headings


def theorem1_sweep(instances: int = 1000, seed: int = 0, params: SensorParams | None = None) -> SweepResult:
    """Realized joint EKF posterior determinant against the closed-form bound."""
    params = params or SensorParams()
    rng = np.random.default_rng(seed)
    res = SweepResult("theorem1")
    t0 = time.perf_counter()
    for i in range(instances):
        belief, m, headings = random_bound_instance(rng, params)
        _, rec = ekf_update_single(belief, m, headings, params)
        bound = theorem1_rhs(belief.covariance, m.observer, m.target, params.r_c)
        if bound.denominator < 1.0:
            res.violations.append(f"instance {i}: denominator {bound.denominator!r} < 1")
        margin = bound.log_value + math.log1p(BOUND_RTOL) - rec.logdet_post
        res.worst_margin = min(res.worst_margin, margin)
        if rec.skipped or margin < 0.0:
            res.violations.append(f"instance {i}: logdet {rec.logdet_post!r} > bound {bound.log_value!r}")
        res.instances += 1
    res.seconds = time.perf_counter() - t0
    return res


def lemma_a1_sweep(instances: int = 1000, seed: int = 1, rtol: float = LEMMA_RTOL) -> SweepResult:
    rng = np.random.default_rng(seed)
    res = SweepResult("lemma_a1")
    t0 = time.perf_counter()
    for i in range(instances):
        n = int(rng.integers(1, 7))
        a = gram_pd(rng, n, int(rng.integers(1, n + 1)))
        lhs, rhs, ok = lemma_a1_holds(a, rtol)
        res.worst_margin = min(res.worst_margin, (lhs - rhs) / abs(rhs))
        if not ok:
            res.violations.append(f"instance {i}: det(I+A)={lhs!r} < 1+tr(A)={rhs!r}")
        res.instances += 1
    res.seconds = time.perf_counter() - t0
    return res


def lemma_a2_sweep(instances: int = 1000, seed: int = 2, rtol: float = LEMMA_RTOL) -> SweepResult:
    rng = np.random.default_rng(seed)
    res = SweepResult("lemma_a2")
    t0 = time.perf_counter()
    for i in range(instances):
        n = int(rng.integers(1, 5))
        m = gram_pd(rng, 2 * n, int(rng.integers(n, 2 * n + 1)))
        a, b, c = m[:n, :n], m[n:, :n], m[n:, n:]
        t1, t2, ok = lemma_a2_holds(a, b, c, rtol)
        res.worst_margin = min(res.worst_margin, t1 - t2, t2)
        if not ok:
            res.violations.append(f"instance {i}: t1={t1!r}, t2={t2!r}")
        res.instances += 1
    res.seconds = time.perf_counter() - t0
    return res


def running_bound_check(n_robots: int = 5, ticks: int = 1000, seed: int = 0,
                        policy: str = "alg1", q: int = 2) -> SweepResult:
    """Run a filter and the bound recursion side by side; the bound must dominate every tick."""
    dt = 0.1
    duration = ticks * dt
    cfg = ScenarioConfig(n_robots=n_robots, dt=dt, duration=duration, policy=policy, q=q, seed=seed,
                         windows=(Window(0.0, duration, tuple(range(1, n_robots + 1)), closed_start=True),),
                         track_bound=True)
    res = SweepResult("running_bound")
    t0 = time.perf_counter()
    trace = run_scenario(cfg)
    margins = trace.bound_logdet - trace.logdet
    res.instances = trace.n_ticks
    res.worst_margin = float(margins.min())
    res.violations = list(trace.violations)
    res.seconds = time.perf_counter() - t0
    return res


def verify_all(instances: int = 1000, seed: int = 0) -> list[SweepResult]:
    return [theorem1_sweep(instances, seed), lemma_a1_sweep(instances, seed + 1),
            lemma_a2_sweep(instances, seed + 2), running_bound_check(seed=seed)]

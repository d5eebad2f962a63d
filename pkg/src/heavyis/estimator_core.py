"""Mixture importance sampling with conditional jump-count rejection samplers.

The importance measure mixes the nominal law with the law conditioned on an
auxiliary event ``B`` (enough big jumps):

    Q = w * P + (1 - w) * P( . | B),    Z = 1_A / (w + (1 - w) * 1_B / P(B)).

Replication ``i`` draws all of its randomness from a Philox stream keyed by
``(seed, i)``, so results do not depend on how replications are split across
worker processes.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Protocol

import numpy as np
from scipy import stats
from scipy.special import comb

from .heavy_tails import TailDistribution
from .path_model import (
    JumpSkeleton,
    compensating_drift,
    simulate_cpp_nominal,
    skeleton_from_counts,
)

logger = logging.getLogger(__name__)

Z_95 = 1.96
MASS_TOL = 1e-12
WORKERS_ENV = "HEAVYIS_WORKERS"


class DegenerateAuxiliarySetError(ValueError):
    pass


def replication_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one replication."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def prob_B_1d(n: float, lam: float, l_star: int, p: float) -> float:
    """``P(Poisson(lam * n * p) >= l_star)``."""
    if l_star < 1:
        raise ValueError("l_star must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p == 0.0:
        return 0.0
    return float(stats.poisson.sf(l_star - 1, lam * n * p))


def interval_count_prob(mean: float, lo: int, hi: float) -> float:
    """``P(lo <= Poisson(mean) <= hi)``; ``hi`` may be ``inf``."""
    if mean <= 0.0:
        return 1.0 if lo == 0 else 0.0
    if math.isinf(hi):
        return float(stats.poisson.sf(lo - 1, mean)) if lo > 0 else 1.0
    if lo == 0:
        return float(stats.poisson.cdf(hi, mean))
    return float(max(0.0, stats.poisson.cdf(hi, mean) - stats.poisson.cdf(lo - 1, mean)))


class ThinnedCountLaw:
    """Total jump count ``N ~ Poisson(mean_total)`` given ``lo <= K <= hi``.

    ``K`` is the number of the ``N`` jumps that exceed the threshold, each
    independently with probability ``p``. The conditional law of ``N`` is tabulated
    in log space and truncated once the cumulative mass reaches ``1 - 1e-12``.
    """

    def __init__(self, mean_total: float, p: float, lo: int = 1, hi: float = math.inf):
        if lo < 0 or hi < lo:
            raise ValueError("need 0 <= lo <= hi")
        self.mean_total = float(mean_total)
        self.p = float(p)
        self.lo = int(lo)
        self.hi = hi
        self.prob = interval_count_prob(self.mean_total * self.p, self.lo, hi)
        if not self.prob > 0.0:
            raise DegenerateAuxiliarySetError("degenerate auxiliary set")
        self.m_values, self.cdf = self._tabulate()

    def _log_window(self, m: np.ndarray) -> np.ndarray:
        p, lo, hi = self.p, self.lo, self.hi
        with np.errstate(divide="ignore"):
            if math.isinf(hi):
                return stats.binom.logsf(lo - 1, m, p) if lo > 0 else np.zeros(m.shape)
            if lo == 0:
                return stats.binom.logcdf(hi, m, p)
            diff = stats.binom.cdf(hi, m, p) - stats.binom.cdf(lo - 1, m, p)
            return np.log(np.maximum(diff, 0.0))

    def _tabulate(self) -> tuple[np.ndarray, np.ndarray]:
        mu = self.mean_total
        log_prob = math.log(self.prob)
        start = self.lo
        span = int(mu + 40.0 * math.sqrt(mu + 1.0) + 64)
        while True:
            m = np.arange(start, start + span, dtype=np.int64)
            logw = stats.poisson.logpmf(m, mu) + self._log_window(m) - log_prob
            h = np.exp(logw)
            total = math.fsum(h)
            if total >= 1.0 - MASS_TOL or span > 1e8:
                break
            span *= 2
        if not total > 0:
            raise DegenerateAuxiliarySetError("degenerate auxiliary set")
        cdf = np.cumsum(h) / total
        keep = int(np.searchsorted(cdf, 1.0 - MASS_TOL, side="left")) + 1
        m, h = m[:keep], h[:keep]
        cdf = np.cumsum(h)
        cdf /= cdf[-1]
        return m, cdf

    def pmf(self) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.cdf)))

    def mean(self) -> float:
        return float(np.dot(self.m_values, self.pmf()))

    def sample(self, rng: np.random.Generator) -> int:
        k = int(np.searchsorted(self.cdf, rng.random(), side="right"))
        return int(self.m_values[min(k, self.m_values.size - 1)])


def sample_count_given_B(n: float, lam: float, l_star: int, p: float, rng) -> int:
    return ThinnedCountLaw(lam * n, p, l_star).sample(rng)


def planted_rejection(
    m: int,
    lo: int,
    hi: float,
    nominal: Callable[[np.random.Generator, int], np.ndarray],
    planted: Callable[[np.random.Generator, int], np.ndarray],
    exceeds: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Draw ``m`` i.i.d. values conditioned on ``lo <= #exceedances <= hi``.

    Each attempt picks ``lo`` positions uniformly, fills them from the conditional
    law above the threshold and the rest nominally, and is accepted with
    probability ``1{c <= hi} / C(c, lo)`` where ``c`` counts exceedances. Returns the
    values and the number of attempts.
    """
    if m < lo:
        raise ValueError("fewer jumps than required exceedances")
    attempts = 0
    while True:
        attempts += 1
        x = nominal(rng, m)
        if lo > 0:
            idx = rng.choice(m, size=lo, replace=False)
            x[idx] = planted(rng, lo)
        c = int(np.count_nonzero(exceeds(x)))
        u = rng.random()
        if c <= hi and u * comb(c, lo, exact=True) < 1.0:
            return x, attempts


def sample_path_conditional_1d(
    n: float,
    lam: float,
    dist: TailDistribution,
    l_star: int,
    gamma: float,
    rng: np.random.Generator,
    count_law: ThinnedCountLaw | None = None,
) -> tuple[JumpSkeleton, int]:
    """Scaled compound Poisson path given at least ``l_star`` jumps above ``n * gamma``."""
    thr = n * gamma
    if count_law is None:
        count_law = ThinnedCountLaw(lam * n, dist.tail_right(thr), l_star)
    m = count_law.sample(rng)
    sizes, attempts = planted_rejection(
        m,
        l_star,
        math.inf,
        lambda g, k: dist.sample(g, k),
        lambda g, k: dist.sample_conditional_right(thr, g, k),
        lambda x: x > thr,
        rng,
    )
    drift = compensating_drift([lam], [dist])
    return skeleton_from_counts(drift, [sizes / n], rng), attempts


# Mixture estimator -------------------------------------------------------


class ISProblem(Protocol):
    """What :func:`estimate` needs from an application."""

    p_aux: float

    def sample_nominal(self, rng: np.random.Generator) -> Any: ...

    def sample_conditional(self, rng: np.random.Generator) -> tuple[Any, int]: ...

    def in_target(self, path: Any) -> bool: ...

    def in_aux(self, path: Any) -> bool: ...


@dataclass(frozen=True)
class MixtureConfig:
    w: float
    n: float
    N: int
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.w < 1.0:
            raise ValueError("mixture weight w must lie in (0, 1)")
        if self.N < 1:
            raise ValueError("need at least one replication")


@dataclass
class EstimationReport:
    estimate: float
    variance: float
    std_err: float
    ci_radius_95: float
    precision_ratio: float
    p_aux: float
    mean_rejection_iters: float
    hits_in_B: int
    hits_out_B: int
    n_samples: int
    n_conditional: int
    wall_time_s: float = 0.0


@dataclass
class ReplicationData:
    """Per-replication outputs, in replication order."""

    z: np.ndarray
    weight: np.ndarray
    hit: np.ndarray
    in_b: np.ndarray
    conditional: np.ndarray
    iterations: np.ndarray


def likelihood_ratio(in_b: bool, w: float, p_aux: float) -> float:
    """``dP/dQ`` for the mixture measure."""
    return 1.0 / (w + (1.0 - w) / p_aux) if in_b else 1.0 / w


def _run_chunk(problem: ISProblem, seed: int, w: float, start: int, stop: int) -> ReplicationData:
    size = stop - start
    z = np.zeros(size)
    weight = np.zeros(size)
    hit = np.zeros(size, dtype=bool)
    in_b = np.zeros(size, dtype=bool)
    cond = np.zeros(size, dtype=bool)
    iters = np.zeros(size)
    w_b = likelihood_ratio(True, w, problem.p_aux)
    w_off = 1.0 / w
    for k in range(size):
        rng = replication_rng(seed, start + k)
        if rng.random() < w:
            path = problem.sample_nominal(rng)
        else:
            path, iters[k] = problem.sample_conditional(rng)
            cond[k] = True
        b = bool(problem.in_aux(path))
        a = bool(problem.in_target(path))
        in_b[k], hit[k] = b, a
        weight[k] = w_b if b else w_off
        z[k] = weight[k] if a else 0.0
    return ReplicationData(z, weight, hit, in_b, cond, iters)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else 1
    return max(1, int(workers))


def run_replications(
    problem: ISProblem, cfg: MixtureConfig, workers: int | None = None, chunk: int = 2000
) -> ReplicationData:
    workers = resolve_workers(workers)
    bounds = [(s, min(s + chunk, cfg.N)) for s in range(0, cfg.N, chunk)]
    if workers == 1 or len(bounds) == 1:
        parts = [_run_chunk(problem, cfg.seed, cfg.w, s, e) for s, e in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, problem, cfg.seed, cfg.w, s, e) for s, e in bounds]
            parts = [f.result() for f in futures]
    return ReplicationData(
        *(np.concatenate([getattr(p, f) for p in parts]) for f in ReplicationData.__dataclass_fields__)
    )


def summarize(data: ReplicationData, p_aux: float, wall_time_s: float = 0.0) -> EstimationReport:
    """Order-independent reduction of replication outputs into a report."""
    N = data.z.size
    mean = math.fsum(data.z) / N
    m2 = math.fsum((data.z - mean) ** 2)
    var = m2 / (N - 1) if N > 1 else 0.0
    se = math.sqrt(var / N)
    radius = Z_95 * se
    pr = radius / mean if mean > 0 else math.inf
    n_cond = int(np.count_nonzero(data.conditional))
    iters = math.fsum(data.iterations[data.conditional]) / n_cond if n_cond else 0.0
    return EstimationReport(
        estimate=mean,
        variance=var,
        std_err=se,
        ci_radius_95=radius,
        precision_ratio=pr,
        p_aux=p_aux,
        mean_rejection_iters=iters,
        hits_in_B=int(np.count_nonzero(data.hit & data.in_b)),
        hits_out_B=int(np.count_nonzero(data.hit & ~data.in_b)),
        n_samples=N,
        n_conditional=n_cond,
        wall_time_s=wall_time_s,
    )


def estimate(
    problem: ISProblem,
    cfg: MixtureConfig,
    workers: int | None = None,
    return_data: bool = False,
):
    """Run ``cfg.N`` replications of the mixture estimator.

    Returns the :class:`EstimationReport`, plus the per-replication data when
    ``return_data`` is set.
    """
    if not problem.p_aux > 0.0:
        raise DegenerateAuxiliarySetError("auxiliary probability must be positive")
    t0 = time.perf_counter()
    data = run_replications(problem, cfg, workers)
    report = summarize(data, problem.p_aux, time.perf_counter() - t0)
    logger.info(
        "n=%s N=%d estimate=%.4g PR=%.3f", cfg.n, cfg.N, report.estimate, report.precision_ratio
    )
    return (report, data) if return_data else report


@dataclass(frozen=True)
class CompoundPoissonProblem:
    """One-dimensional scaled compound Poisson path with a user-supplied target.

    The auxiliary event asks for at least ``l_star`` jumps above ``n * gamma``.
    ``target`` must be a picklable callable for multi-process runs.
    """

    n: float
    lam: float
    dist: TailDistribution
    l_star: int
    gamma: float
    target: Callable[[JumpSkeleton], bool]

    @property
    def threshold(self) -> float:
        return self.n * self.gamma

    @property
    def p_aux(self) -> float:
        return prob_B_1d(self.n, self.lam, self.l_star, self.dist.tail_right(self.threshold))

    def count_law(self) -> ThinnedCountLaw:
        return _cached_law(self.lam * self.n, self.dist.tail_right(self.threshold), self.l_star)

    def sample_nominal(self, rng):
        return simulate_cpp_nominal([self.lam], [self.dist], self.n, rng)

    def sample_conditional(self, rng):
        return sample_path_conditional_1d(
            self.n, self.lam, self.dist, self.l_star, self.gamma, rng, self.count_law()
        )

    def in_target(self, path) -> bool:
        return bool(self.target(path))

    def in_aux(self, path) -> bool:
        return path.count_exceedances(0, self.gamma) >= self.l_star


_LAW_CACHE: dict[tuple, ThinnedCountLaw] = {}


def _cached_law(mean_total: float, p: float, lo: int, hi: float = math.inf) -> ThinnedCountLaw:
    key = (mean_total, p, lo, hi)
    law = _LAW_CACHE.get(key)
    if law is None:
        if len(_LAW_CACHE) > 256:
            _LAW_CACHE.clear()
        law = _LAW_CACHE[key] = ThinnedCountLaw(mean_total, p, lo, hi)
    return law

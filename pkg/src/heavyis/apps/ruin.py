"""Finite-horizon ruin with capped claims.

Target event for a centered heavy-tailed walk ``S_k``:

    max_k Y_k <= n b  and  max_{0 <= k <= n} (S_k - c k) >= n a.

Reaching level ``n a`` with increments capped at ``n b`` takes ``l* = ceil(a / b)`` big
increments, so the auxiliary event asks for at least ``l*`` increments inside the
window ``(n gamma, n b]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import comb

from ..estimator_core import replication_rng
from ..heavy_tails import TailDistribution


@dataclass(frozen=True)
class RuinSpec:
    a: float
    b: float
    c: float
    dist: TailDistribution
    cap_planted: bool = True

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0 and self.c >= 0):
            raise ValueError("need a, b > 0 and c >= 0")
        ratio = self.a / self.b
        if abs(ratio - round(ratio)) < 1e-12:
            raise ValueError("a must not be a multiple of b")

    @property
    def l_star(self) -> int:
        return math.ceil(self.a / self.b)


def ruin_event(increments: np.ndarray, n: int, spec: RuinSpec) -> bool:
    y = np.asarray(increments, dtype=float)
    if y.size and y.max() > n * spec.b:
        return False
    walk = np.cumsum(y) - spec.c * np.arange(1, y.size + 1)
    return bool(y.size and walk.max() >= n * spec.a)


def ruin_gamma_admissible(spec: RuinSpec, gamma: float) -> bool:
    """The level left after ``l* - 1`` capped jumps must need more than ``l* + 1`` jumps of size ``gamma``."""
    if not 0 < gamma < spec.b:
        return False
    ratio = (spec.a - (spec.l_star - 1) * spec.b) / gamma
    if abs(ratio - round(ratio)) < 1e-9:
        return False
    return math.ceil(ratio) > spec.l_star + 1


def window(n: int, spec: RuinSpec, gamma: float) -> tuple[float, float]:
    """Increment range counted as a big jump."""
    return n * gamma, (n * spec.b if spec.cap_planted else math.inf)


def window_prob(n: int, spec: RuinSpec, gamma: float) -> float:
    lo, hi = window(n, spec, gamma)
    if math.isinf(hi):
        return spec.dist.tail_right(lo)
    return spec.dist.window_prob(lo, hi)


def binomial_upper_tail(n: int, p: float, k: int) -> float:
    """``P(Binomial(n, p) >= k)``."""
    if p <= 0.0:
        return 0.0 if k > 0 else 1.0
    return float(stats.binom.sf(k - 1, n, p))


def ruin_prob_B(n: int, spec: RuinSpec, gamma: float) -> float:
    return binomial_upper_tail(n, window_prob(n, spec, gamma), spec.l_star)


@dataclass(frozen=True)
class RuinProblem:
    spec: RuinSpec
    n: int
    gamma: float

    def __post_init__(self) -> None:
        lo, hi = window(self.n, self.spec, self.gamma)
        d = self.spec.dist
        shift = d.mean_shift
        # survival levels of the raw Pareto bounding the window
        s_lo = float(d.raw_sf(lo + shift))
        s_hi = 0.0 if math.isinf(hi) else float(d.raw_sf(hi + shift))
        object.__setattr__(self, "_s_window", (s_hi, s_lo))
        object.__setattr__(self, "_p_aux", ruin_prob_B(self.n, self.spec, self.gamma))

    @property
    def p_aux(self) -> float:
        return self._p_aux

    def sample_nominal(self, rng: np.random.Generator) -> np.ndarray:
        return self.spec.dist.sample(rng, self.n)

    def sample_conditional(self, rng: np.random.Generator) -> tuple[np.ndarray, int]:
        """Planted-jump rejection: at least ``l*`` increments inside the window.

        Window membership of the nominal increments is decided on the uniforms, and the
        increments are only materialised for the accepted attempt.
        """
        n, k = self.n, self.spec.l_star
        d = self.spec.dist
        lo, hi = window(n, self.spec, self.gamma)
        s_hi, s_lo = self._s_window
        attempts = 0
        while True:
            attempts += 1
            s = 1.0 - rng.random(n)
            idx = rng.choice(n, size=k, replace=False)
            planted = d.window_from_uniform(lo, hi, rng.random(k))
            inside = (s >= s_hi) & (s < s_lo)
            inside[idx] = False
            count = int(np.count_nonzero(inside)) + k
            if rng.random() * comb(count, k, exact=True) < 1.0:
                y = d.raw_isf(s) - d.mean_shift
                y[idx] = planted
                return y, attempts

    def in_target(self, y: np.ndarray) -> bool:
        return ruin_event(y, self.n, self.spec)

    def aux_count(self, y: np.ndarray) -> int:
        lo, hi = window(self.n, self.spec, self.gamma)
        return int(np.count_nonzero((y > lo) & (y <= hi)))

    def in_aux(self, y: np.ndarray) -> bool:
        return self.aux_count(y) >= self.spec.l_star


def ruin_sample_conditional(n: int, spec: RuinSpec, gamma: float, rng) -> tuple[np.ndarray, int]:
    return RuinProblem(spec, n, gamma).sample_conditional(rng)


def crude_monte_carlo(
    spec: RuinSpec, n: int, samples: int, seed: int, batch: int = 20_000
) -> tuple[float, float]:
    """Plain Monte Carlo frequency of the ruin event and its standard error."""
    hits = 0
    d = spec.dist
    drift = spec.c * np.arange(1, n + 1)
    for b, start in enumerate(range(0, samples, batch)):
        size = min(batch, samples - start)
        rng = replication_rng(seed, b)
        y = d.from_uniform(rng.random((size, n)))
        ok = y.max(axis=1) <= n * spec.b
        walk = np.cumsum(y, axis=1) - drift
        hits += int(np.count_nonzero(ok & (walk.max(axis=1) >= n * spec.a)))
    p = hits / samples
    return p, math.sqrt(p * (1 - p) / samples)

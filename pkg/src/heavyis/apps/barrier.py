"""Down-in barrier exercise probability for a centered two-sided heavy-tailed walk.

Target event:

    S_n >= n b  and  min_{0 <= k <= n} (S_k + c k) <= -n a.

The cheapest way there is one big downward increment followed later by one big
upward increment, so the auxiliary event asks for an increment below ``-n gamma_-``
that precedes an increment above ``n gamma_+``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..estimator_core import replication_rng
from ..heavy_tails import TailDistribution


@dataclass(frozen=True)
class BarrierSpec:
    a: float
    b: float
    c: float
    dist: TailDistribution
    gamma_minus: float
    gamma_plus: float

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise ValueError("need a, b, c > 0")
        if not self.dist.two_sided_kind:
            raise ValueError("barrier walk needs a two-sided increment law")
        if not (self.gamma_minus > 0 and self.gamma_plus > 0):
            raise ValueError("thresholds must be positive")

    @property
    def alpha(self) -> float:
        return self.dist.alpha

    @property
    def beta(self) -> float:
        return self.dist.beta


def barrier_event(increments: np.ndarray, n: int, spec: BarrierSpec) -> bool:
    y = np.asarray(increments, dtype=float)
    s = np.cumsum(y)
    if not (s.size and s[-1] >= n * spec.b):
        return False
    low = min(0.0, float(np.min(s + spec.c * np.arange(1, s.size + 1))))
    return low <= -n * spec.a


def _non_integer(x: float) -> bool:
    return abs(x - round(x)) > 1e-9


def barrier_gamma_admissible(spec: BarrierSpec) -> bool:
    """Both non-integrality conditions and the doubled-rate inequality."""
    up_ratio = (spec.a + spec.b) / spec.gamma_plus
    down_ratio = spec.a / spec.gamma_minus
    if not (_non_integer(up_ratio) and _non_integer(down_ratio)):
        return False
    wa, wb = spec.alpha - 1.0, spec.beta - 1.0
    worst = min(wa + math.ceil(up_ratio) * wb, math.ceil(down_ratio) * wa + wb)
    return worst > 2.0 * (wa + wb)


def tail_probs(n: int, spec: BarrierSpec) -> tuple[float, float]:
    """``(p1, p2) = (P(Y > n gamma_+), P(Y < -n gamma_-))``."""
    return spec.dist.tail_right(n * spec.gamma_plus), spec.dist.tail_left(-n * spec.gamma_minus)


def ordered_pair_prob(n: int, p1: float, p2: float) -> float:
    """Probability that some down-exceedance index precedes some up-exceedance index.

    Sums over the position ``k`` of the first down-exceedance; every term is
    non-negative so the sum is stable for tiny ``p1``, ``p2``.
    """
    if n < 2 or p1 <= 0.0 or p2 <= 0.0:
        return 0.0
    k = np.arange(1, n + 1, dtype=float)
    first_down = np.exp((k - 1.0) * math.log1p(-p2)) * p2 if p2 < 1 else (k == 1).astype(float)
    if p1 < 1:
        later_up = -np.expm1((n - k) * math.log1p(-p1))
    else:
        later_up = (k < n).astype(float)
    return float(min(1.0, math.fsum(first_down * later_up)))


def ordered_pair_prob_closed(n: int, p1: float, p2: float) -> float:
    """Closed form of :func:`ordered_pair_prob` (with its limit at ``p1 = p2``)."""
    q1, q2 = 1.0 - p1, 1.0 - p2
    if abs(p1 - p2) < 1e-14:
        p, q = 0.5 * (p1 + p2), 0.5 * (q1 + q2)
        return 1.0 - q**n - n * p * q ** (n - 1)
    return 1.0 - (p2 * q1**n - p1 * q2**n) / (p2 - p1)


def barrier_prob_B(n: int, spec: BarrierSpec) -> float:
    p1, p2 = tail_probs(n, spec)
    return ordered_pair_prob(n, p1, p2)


@dataclass(frozen=True)
class BarrierProblem:
    spec: BarrierSpec
    n: int

    def __post_init__(self) -> None:
        d, n = self.spec.dist, self.n
        lo = -n * self.spec.gamma_minus
        hi = n * self.spec.gamma_plus
        # uniform levels (raw law) equivalent to the two exceedance thresholds
        u_down = float(d.raw_cdf(lo + d.mean_shift))
        u_up = 1.0 - float(d.raw_sf(hi + d.mean_shift))
        object.__setattr__(self, "_levels", (lo, hi, u_down, u_up))
        object.__setattr__(self, "_p_aux", barrier_prob_B(n, self.spec))

    @property
    def p_aux(self) -> float:
        return self._p_aux

    def sample_nominal(self, rng: np.random.Generator) -> np.ndarray:
        return self.spec.dist.sample(rng, self.n)

    def sample_conditional(self, rng: np.random.Generator) -> tuple[np.ndarray, int]:
        """Plant a down-exceedance at ``i1`` and an up-exceedance at ``i2 != i1``.

        The proposal is accepted with probability ``1_B / (D * U)``, ``D`` and ``U``
        being the numbers of down- and up-exceedances, which makes the output exactly
        distributed as the walk conditioned on ``B``.
        """
        n, d = self.n, self.spec.dist
        lo, hi, u_down, u_up = self._levels
        attempts = 0
        while True:
            attempts += 1
            u = rng.random(n)
            i1 = int(rng.integers(n))
            i2 = int(rng.integers(n - 1))
            if i2 >= i1:
                i2 += 1
            r = rng.random(2)
            down = u < u_down
            up = u > u_up
            down[i1], up[i1] = True, False
            down[i2], up[i2] = False, True
            first_down = int(np.argmax(down))
            last_up = n - 1 - int(np.argmax(up[::-1]))
            gate = rng.random()
            if first_down < last_up and gate * np.count_nonzero(down) * np.count_nonzero(up) < 1.0:
                y = d.from_uniform(u)
                y[i1] = d.left_from_uniform(lo, r[0])
                y[i2] = d.right_from_uniform(hi, r[1])
                return y, attempts

    def in_target(self, y: np.ndarray) -> bool:
        return barrier_event(y, self.n, self.spec)

    def in_aux(self, y: np.ndarray) -> bool:
        lo, hi, _, _ = self._levels
        down = np.flatnonzero(y < lo)
        up = np.flatnonzero(y > hi)
        return bool(down.size and up.size and down[0] < up[-1])


def barrier_sample_conditional(n: int, spec: BarrierSpec, rng) -> tuple[np.ndarray, int]:
    return BarrierProblem(spec, n).sample_conditional(rng)


def crude_monte_carlo(
    spec: BarrierSpec, n: int, samples: int, seed: int, batch: int = 50_000
) -> tuple[float, float]:
    """Plain Monte Carlo frequency of the barrier event and its standard error."""
    hits = 0
    d = spec.dist
    drift = spec.c * np.arange(1, n + 1)
    for b, start in enumerate(range(0, samples, batch)):
        size = min(batch, samples - start)
        rng = replication_rng(seed, b)
        s = np.cumsum(d.from_uniform(rng.random((size, n))), axis=1)
        low = np.minimum((s + drift).min(axis=1), 0.0)
        hits += int(np.count_nonzero((s[:, -1] >= n * spec.b) & (low <= -n * spec.a)))
    p = hits / samples
    return p, math.sqrt(p * (1 - p) / samples)

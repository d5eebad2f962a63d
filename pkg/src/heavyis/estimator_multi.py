"""Auxiliary events built from several jump-count requirements.

An auxiliary set is a finite list of lattice points ``l``. A path belongs to it when
for some entry every coordinate ``i`` has at least ``l_i`` jumps above ``n * gamma_i``.
Per-coordinate exceedance counts are independent Poisson variables, which gives an
inclusion-exclusion formula for the probability and a decomposition into disjoint
boxes of count vectors, one rejection sampler per box.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .estimator_core import (
    DegenerateAuxiliarySetError,
    ThinnedCountLaw,
    interval_count_prob,
    planted_rejection,
)
from .heavy_tails import TailDistribution
from .path_model import JumpSkeleton, skeleton_from_counts

logger = logging.getLogger(__name__)

MIN_BLOCK_PROB = 1e-300


@dataclass(frozen=True)
class DisjointBlock:
    """Box ``lower_i <= count_i <= upper_i`` of exceedance-count vectors."""

    lower: tuple[int, ...]
    upper: tuple[float, ...]

    def contains(self, counts: Sequence[int]) -> bool:
        return all(lo <= c <= hi for lo, c, hi in zip(self.lower, counts, self.upper))


def _normalize(J: Iterable[Sequence[int]]) -> list[tuple[int, ...]]:
    entries = sorted({tuple(int(x) for x in l) for l in J}, key=lambda l: (l[-1], l))
    if not entries:
        raise ValueError("auxiliary set needs at least one entry")
    d = len(entries[0])
    if any(len(l) != d or min(l) < 0 for l in entries):
        raise ValueError("entries must be non-negative vectors of equal length")
    return entries


def in_union(counts: Sequence[int], J: Iterable[Sequence[int]]) -> bool:
    """Direct membership: some entry is dominated by ``counts``."""
    return any(all(c >= li for c, li in zip(counts, l)) for l in J)


def decompose_blocks(J: Iterable[Sequence[int]]) -> list[DisjointBlock]:
    """Split the union of the count cylinders of ``J`` into disjoint boxes.

    Coordinates are processed from last to first. At each coordinate the distinct
    requirement levels cut the count axis into intervals; inside an interval only
    the entries whose requirement is met stay active, and the remaining
    coordinates are split recursively. A cell is complete once an active entry has
    no requirement left.
    """
    entries = _normalize(J)
    d = len(entries[0])
    blocks: list[DisjointBlock] = []

    def split(active, coord, lower, upper):
        if any(all(e[k] == 0 for k in range(coord + 1)) for e in active):
            blocks.append(
                DisjointBlock((0,) * (coord + 1) + lower, (math.inf,) * (coord + 1) + upper)
            )
            return
        levels = sorted({e[coord] for e in active})
        for j, v in enumerate(levels):
            hi = levels[j + 1] - 1 if j + 1 < len(levels) else math.inf
            sub = [e for e in active if e[coord] <= v]
            split(sub, coord - 1, (v,) + lower, (hi,) + upper)

    split(entries, d - 1, (), ())
    blocks.sort(key=lambda b: (-b.lower[-1], b.lower))
    return blocks


def coordinate_means(
    n: float, rates: Sequence[float], dists: Sequence[TailDistribution], gammas: Sequence[float]
) -> np.ndarray:
    """Poisson means ``lambda_i * n * P(W_i > n * gamma_i)`` of exceedance counts."""
    return np.array(
        [lam * n * d.tail_right(n * g) for lam, d, g in zip(rates, dists, gammas)], dtype=float
    )


def prob_B_multi(
    n: float,
    rates: Sequence[float],
    dists: Sequence[TailDistribution],
    J: Iterable[Sequence[int]],
    gammas: Sequence[float],
) -> float:
    """Inclusion-exclusion over subsets of ``J``.

    The intersection of the cylinders of a subset asks for ``max_l l_i`` exceedances
    in coordinate ``i``, and coordinates are independent.
    """
    entries = _normalize(J)
    means = coordinate_means(n, rates, dists, gammas)
    terms = []
    for size in range(1, len(entries) + 1):
        sign = 1.0 if size % 2 else -1.0
        for subset in itertools.combinations(entries, size):
            need = np.max(np.array(subset), axis=0)
            prod = 1.0
            for mu, k in zip(means, need):
                if k > 0:
                    prod *= float(stats.poisson.sf(k - 1, mu))
            terms.append(sign * prod)
    return float(min(1.0, max(0.0, math.fsum(terms))))


def block_probability(block: DisjointBlock, means: Sequence[float]) -> float:
    prob = 1.0
    for mu, lo, hi in zip(means, block.lower, block.upper):
        prob *= interval_count_prob(mu, lo, hi)
    return prob


@dataclass
class MultiAuxiliary:
    """Precomputed block tables for one ``(n, gamma, J)``."""

    n: float
    rates: tuple[float, ...]
    dists: tuple[TailDistribution, ...]
    J: tuple[tuple[int, ...], ...]
    gammas: tuple[float, ...]
    blocks: list[DisjointBlock] = field(init=False)
    block_probs: np.ndarray = field(init=False)
    prob: float = field(init=False)

    def __post_init__(self) -> None:
        self.rates = tuple(float(x) for x in self.rates)
        self.dists = tuple(self.dists)
        self.gammas = tuple(float(x) for x in self.gammas)
        self.J = tuple(_normalize(self.J))
        if not (len(self.rates) == len(self.dists) == len(self.gammas) == len(self.J[0])):
            raise ValueError("rates, distributions, thresholds and entries disagree in dimension")
        if any(g <= 0 for g in self.gammas):
            raise ValueError("thresholds must be positive")
        self.means = coordinate_means(self.n, self.rates, self.dists, self.gammas)
        self.tails = np.array([d.tail_right(self.n * g) for d, g in zip(self.dists, self.gammas)])
        blocks = decompose_blocks(self.J)
        probs = np.array([block_probability(b, self.means) for b in blocks])
        keep = probs >= MIN_BLOCK_PROB
        if not np.all(keep):
            logger.warning("dropping %d blocks with negligible probability", int(np.sum(~keep)))
        self.blocks = [b for b, k in zip(blocks, keep) if k]
        self.block_probs = probs[keep]
        self.prob = math.fsum(self.block_probs)
        if not self.prob > 0:
            raise DegenerateAuxiliarySetError("degenerate auxiliary set")
        self._block_cdf = np.cumsum(self.block_probs) / self.prob
        self._laws: dict[tuple[int, int], ThinnedCountLaw | None] = {}

    @property
    def block_weights(self) -> np.ndarray:
        return self.block_probs / self.prob

    def _law(self, b: int, i: int) -> ThinnedCountLaw | None:
        key = (b, i)
        if key not in self._laws:
            lo, hi = self.blocks[b].lower[i], self.blocks[b].upper[i]
            if lo == 0 and math.isinf(hi):
                self._laws[key] = None
            else:
                self._laws[key] = ThinnedCountLaw(self.rates[i] * self.n, self.tails[i], lo, hi)
        return self._laws[key]

    def exceedance_counts(self, sizes: Sequence[np.ndarray]) -> list[int]:
        """Counts of raw (unscaled) sizes above ``n * gamma_i``."""
        return [int(np.count_nonzero(x > self.n * g)) for x, g in zip(sizes, self.gammas)]

    def contains(self, counts: Sequence[int]) -> bool:
        return in_union(counts, self.J)

    def sample_sizes(self, rng: np.random.Generator) -> tuple[list[np.ndarray], int, float]:
        """Raw jump sizes per coordinate given ``B``; returns ``(sizes, block, iterations)``.

        ``iterations`` is the mean number of proposals per coordinate rejection loop
        (1.0 when the block leaves every coordinate unconstrained).
        """
        b = min(int(np.searchsorted(self._block_cdf, rng.random(), side="right")), len(self.blocks) - 1)
        block = self.blocks[b]
        sizes = []
        attempts_total = 0
        loops = 0
        for i, dist in enumerate(self.dists):
            law = self._law(b, i)
            if law is None:
                m = int(rng.poisson(self.rates[i] * self.n))
                sizes.append(dist.sample(rng, m))
                continue
            thr = self.n * self.gammas[i]
            m = law.sample(rng)
            x, attempts = planted_rejection(
                m,
                block.lower[i],
                block.upper[i],
                lambda g, k, dist=dist: dist.sample(g, k),
                lambda g, k, dist=dist, thr=thr: dist.sample_conditional_right(thr, g, k),
                lambda v, thr=thr: v > thr,
                rng,
            )
            attempts_total += attempts
            loops += 1
            sizes.append(x)
        return sizes, b, attempts_total / loops if loops else 1.0


def sample_path_conditional_multi(
    aux: MultiAuxiliary, rng: np.random.Generator, drift: Sequence[float] | None = None
) -> tuple[JumpSkeleton, float]:
    """Scaled multi-coordinate path drawn from the nominal law conditioned on ``B``.

    Without an explicit ``drift`` every coordinate is compensated to mean zero.
    """
    sizes, _, iterations = aux.sample_sizes(rng)
    if drift is None:
        drift = [-lam * d.mean() for lam, d in zip(aux.rates, aux.dists)]
    return skeleton_from_counts(drift, [x / aux.n for x in sizes], rng), iterations

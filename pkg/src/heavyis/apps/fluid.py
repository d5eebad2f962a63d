"""Overflow of a target set of stations in a stochastic fluid network.

Station ``i`` receives Pareto jobs at unit Poisson rate and works at rate ``r_i``;
a fraction ``Q[i, j]`` of its output moves on to station ``j``. The target is
``c^T Z_n(1) >= a`` for the scaled workload ``Z_n``, which becomes rare because the
network is stable: it needs the right stations to receive big jobs early enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .. import skorokhod
from ..estimator_multi import MultiAuxiliary
from ..heavy_tails import TailDistribution
from ..jump_lattice import enumerate_J, rate, reduce_J
from ..path_model import JumpSkeleton, skeleton_from_counts
from ..skorokhod import FluidNetwork, KnapsackResult, dz, r_star, reflect_final, solve_fluid_knapsack


def station_distributions(network: FluidNetwork, betas: Sequence[float]) -> tuple[TailDistribution, ...]:
    """Pareto job sizes with mean ``rho_i``: scale ``rho_i (beta_i - 1) / beta_i``."""
    return tuple(
        TailDistribution.pareto(b, t_r=rho * (b - 1.0) / b) for b, rho in zip(betas, network.rho)
    )


@dataclass(frozen=True)
class FluidSpec:
    network: FluidNetwork
    c: tuple[int, ...]
    a: float
    betas: tuple[float, ...]
    gammas: tuple[float, ...]
    knapsack: KnapsackResult = field(init=False)
    J: tuple[tuple[int, ...], ...] = field(init=False)
    J_reduced: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self) -> None:
        d = self.network.d
        c = tuple(int(x) for x in self.c)
        if len(c) != d or len(self.betas) != d or len(self.gammas) != d:
            raise ValueError("c, betas and gammas need one entry per station")
        if not any(c) or any(x not in (0, 1) for x in c):
            raise ValueError("c must be a non-zero 0/1 vector")
        if not self.a > 0:
            raise ValueError("level a must be positive")
        if any(g <= 0 for g in self.gammas):
            raise ValueError("thresholds must be positive")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        ks = solve_fluid_knapsack(self.network, c, self.a, self.betas)
        if not ks.many_jumps_cheaper:
            raise ValueError("a single big job already reaches the level; several jumps are not needed")
        w = self.weights
        J = enumerate_J(ks.l_star, w)
        reduced = reduce_J(J, ks.l_star, w, drop=[l for l in J if self._unreachable(l)])
        object.__setattr__(self, "knapsack", ks)
        object.__setattr__(self, "J", tuple(J))
        object.__setattr__(self, "J_reduced", tuple(reduced))

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(b - 1.0 for b in self.betas)

    @property
    def l_star(self) -> tuple[int, ...]:
        return self.knapsack.l_star

    @property
    def dists(self) -> tuple[TailDistribution, ...]:
        return station_distributions(self.network, self.betas)

    def _unreachable(self, l: Sequence[int]) -> bool:
        """Jumps confined to non-target stations whose overload cannot reach the level."""
        support = [i for i, x in enumerate(l) if x]
        if any(self.c[i] for i in support):
            return False
        return dz(self.network, self.c, support) < self.a


def overload_thresholds(spec: FluidSpec) -> dict[int, float]:
    """Workload that each overloaded station of ``l*`` must carry.

    With all of ``l*``'s stations overloaded the target grows at ``dz(full)``, and
    with station ``i`` dropped at ``dz(rest)``. The overload of ``i`` must last a
    fraction ``t'`` solving ``dz(full) t' + dz(rest) (1 - t') = a``, and station ``i``
    drains at rate ``decay_i``, so its big job must be at least ``decay_i * t'``.
    """
    net, c = spec.network, spec.c
    active = [i for i, x in enumerate(spec.l_star) if x]
    full = dz(net, c, active)
    rs = r_star(net, active)
    out = {}
    for i in active:
        rest = [j for j in active if j != i]
        part = dz(net, c, rest)
        t_prime = (spec.a - part) / (full - part)
        decay = -(net.mu[i] - sum(net.Q[j, i] * v for j, v in rs.items()))
        out[i] = decay * t_prime
    return out


def fluid_gamma_admissible(spec: FluidSpec) -> bool:
    """Thresholds small enough that ``A`` without ``B`` costs more than twice ``l*``."""
    w = spec.weights
    bound = 2.0 * rate(spec.l_star, w)
    entries = set(spec.J_reduced)
    for i, thr in overload_thresholds(spec).items():
        ratio = thr / spec.gammas[i]
        if abs(ratio - round(ratio)) < 1e-9:
            return False
        others = sum(w[j] * spec.l_star[j] for j in range(len(w)) if j != i)
        if not math.ceil(ratio) * w[i] + others > bound:
            return False
    for k in range(len(w)):
        unit = tuple(1 if j == k else 0 for j in range(len(w)))
        if spec.c[k] and unit in entries:
            ratio = spec.a / spec.gammas[k]
            if abs(ratio - round(ratio)) < 1e-9 or not math.ceil(ratio) * w[k] > bound:
                return False
    return True


def exceedance_means(n: float, spec: FluidSpec) -> np.ndarray:
    return np.array([n * d.tail_right(n * g) for d, g in zip(spec.dists, spec.gammas)])


def fluid_prob_B(n: float, spec: FluidSpec) -> float:
    """Closed form for an auxiliary set made of a 0/1 pattern plus unit target vectors.

    ``P(B^c) = [1 - prod_{i in l*} (1 - e^{-n p_i})] * prod_k e^{-n p_k}``.
    """
    means = exceedance_means(n, spec)
    lstar = spec.l_star
    others = [l for l in spec.J_reduced if l != lstar]
    if any(x > 1 for x in lstar) or any(sum(l) != 1 for l in others):
        raise ValueError("closed form needs a 0/1 pattern plus unit vectors")
    hit_probs = [-math.expm1(-means[i]) for i, x in enumerate(lstar) if x]
    if lstar not in spec.J_reduced:
        miss_all = 1.0
    elif min(hit_probs) == 0.0:
        miss_all = 1.0
    else:
        miss_all = -math.expm1(math.fsum(math.log(q) for q in hit_probs))
    singles = math.fsum(means[l.index(1)] for l in others)
    return float(-math.expm1(math.log(miss_all) - singles)) if miss_all > 0 else 1.0


@numba.njit(cache=True)
def _target_value(Q, drift, jt, jc, jx, c):
    z = skorokhod._reflect_kernel(drift, Q, np.zeros(drift.size), jt, jc, jx, False)[1][0]
    total = 0.0
    for i in range(drift.size):
        total += c[i] * z[i]
    return total


def fluid_event(network: FluidNetwork, skeleton: JumpSkeleton, c: Sequence[int], a: float) -> bool:
    """Whether the reflected workload satisfies ``c^T Z(1) >= a``."""
    t, k, x = skeleton.merged()
    z = reflect_final(network.Q, np.ascontiguousarray(skeleton.drift), t, k, x)
    return float(np.dot(c, z)) >= a


@dataclass(frozen=True)
class FluidProblem:
    spec: FluidSpec
    n: int

    def __post_init__(self) -> None:
        spec = self.spec
        aux = MultiAuxiliary(self.n, (1.0,) * spec.network.d, spec.dists, spec.J_reduced, spec.gammas)
        object.__setattr__(self, "aux", aux)
        object.__setattr__(self, "_drift", np.ascontiguousarray(spec.network.service_drift))
        object.__setattr__(self, "_c", np.asarray(spec.c, dtype=float))

    @property
    def p_aux(self) -> float:
        return self.aux.prob

    def _skeleton(self, sizes, rng) -> JumpSkeleton:
        return skeleton_from_counts(self._drift, [x / self.n for x in sizes], rng)

    def sample_nominal(self, rng: np.random.Generator) -> JumpSkeleton:
        dists = self.aux.dists
        sizes = [d.sample(rng, int(rng.poisson(self.n))) for d in dists]
        return self._skeleton(sizes, rng)

    def sample_conditional(self, rng: np.random.Generator) -> tuple[JumpSkeleton, float]:
        sizes, _, iterations = self.aux.sample_sizes(rng)
        return self._skeleton(sizes, rng), iterations

    def in_target(self, path: JumpSkeleton) -> bool:
        t, k, x = path.merged()
        return _target_value(self.spec.network.Q, self._drift, t, k, x, self._c) >= self.spec.a

    def in_aux(self, path: JumpSkeleton) -> bool:
        counts = [path.count_exceedances(i, g) for i, g in enumerate(self.spec.gammas)]
        return self.aux.contains(counts)


def fluid_sample_conditional(n: int, spec: FluidSpec, rng) -> tuple[JumpSkeleton, float]:
    return FluidProblem(spec, n).sample_conditional(rng)


@numba.njit(cache=True)
def _crude_kernel(Q, drift, c, a, betas, scales, n, samples, seed):
    np.random.seed(seed)
    d = drift.size
    hits = 0
    for _ in range(samples):
        counts = np.empty(d, dtype=np.int64)
        total = 0
        for i in range(d):
            counts[i] = np.random.poisson(n)
            total += counts[i]
        jt = np.empty(total)
        jc = np.empty(total, dtype=np.int64)
        jx = np.empty(total)
        pos = 0
        for i in range(d):
            for _k in range(counts[i]):
                jt[pos] = 1.0 - np.random.random()
                jc[pos] = i
                jx[pos] = scales[i] * (1.0 - np.random.random()) ** (-1.0 / betas[i]) / n
                pos += 1
        order = np.argsort(jt)
        z = skorokhod._reflect_kernel(drift, Q, np.zeros(d), jt[order], jc[order], jx[order], False)[1][0]
        val = 0.0
        for i in range(d):
            val += c[i] * z[i]
        if val >= a:
            hits += 1
    return hits


def crude_monte_carlo(spec: FluidSpec, n: int, samples: int, seed: int, batch: int = 200_000):
    """Plain Monte Carlo frequency of the overflow event and its standard error."""
    net = spec.network
    dists = spec.dists
    betas = np.array([d.beta for d in dists])
    scales = np.array([d.t_r for d in dists])
    hits = 0
    for b, start in enumerate(range(0, samples, batch)):
        size = min(batch, samples - start)
        hits += _crude_kernel(
            net.Q, np.ascontiguousarray(net.service_drift), np.asarray(spec.c, dtype=float),
            spec.a, betas, scales, float(n), size, (seed * 1_000_003 + b) % (2**32 - 1),
        )
    p = hits / samples
    return p, math.sqrt(p * (1 - p) / samples)

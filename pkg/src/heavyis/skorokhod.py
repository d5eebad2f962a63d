"""Fluid network analytics: Skorokhod reflection, idle-rate fixed points and growth rates.

Conventions: ``Q[i, j]`` is the fraction of the output of station ``i`` routed to
station ``j``, ``R = (I - Q)^T``, and the reflected pair solves
``Z = z0 + X + R Y`` with ``Z >= 0`` and ``Y`` nondecreasing, increasing only while
the corresponding coordinate of ``Z`` is zero. Stations are indexed from 0.

For piecewise linear inputs with upward jumps the reflected path is piecewise
linear, so :func:`reflect` solves it exactly: on every segment the regulator rates
solve a small linear complementarity problem, and segments end at input jumps or
at the first time a coordinate reaches zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np

from .path_model import JumpSkeleton

BOUNDARY_TOL = 1e-12
_MAX_RATE_ITERS = 100_000
_MEMO_MAX_DIM = 12


class ReflectionError(RuntimeError):
    pass


class DegenerateLevelError(ValueError):
    pass


@dataclass(frozen=True)
class FluidNetwork:
    Q: np.ndarray
    r: np.ndarray
    rho: np.ndarray
    R: np.ndarray = field(init=False)
    r_prime: np.ndarray = field(init=False)
    mu: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        Q = np.array(self.Q, dtype=float)
        r = np.array(self.r, dtype=float).ravel()
        rho = np.array(self.rho, dtype=float).ravel()
        d = r.size
        if Q.shape != (d, d) or rho.size != d:
            raise ValueError("Q must be d x d with d = len(r) = len(rho)")
        if np.any(Q < 0) or np.any(np.diag(Q) != 0):
            raise ValueError("routing matrix needs non-negative entries and zero diagonal")
        if np.any(Q.sum(axis=1) > 1 + 1e-12):
            raise ValueError("routing matrix rows must sum to at most 1")
        if d and np.max(np.abs(np.linalg.eigvals(Q))) >= 1 - 1e-12:
            raise ValueError("routing matrix must have spectral radius below 1")
        if np.any(r <= 0) or np.any(rho < 0):
            raise ValueError("service rates must be positive and input means non-negative")
        R = (np.eye(d) - Q).T
        r_prime = r - np.linalg.solve(R, rho)
        if np.any(r_prime <= 0):
            raise ValueError("unstable network: need R^{-1} rho < r")
        for name, val in (("Q", Q), ("r", r), ("rho", rho), ("R", R)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "r_prime", r_prime)
        object.__setattr__(self, "mu", rho - R @ r)

    @property
    def d(self) -> int:
        return self.r.size

    @property
    def service_drift(self) -> np.ndarray:
        """Drift ``-(R r)`` of the free input between jumps."""
        return -(self.R @ self.r)


@dataclass(frozen=True)
class ReflectedPath:
    """Reflected path at its kink epochs; jumps appear as two rows at one epoch."""

    epochs: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    X: np.ndarray

    def final(self) -> np.ndarray:
        return self.Z[-1]


# Numba kernels -------------------------------------------------------------


@numba.njit(cache=True)
def _regulator_rates(mu, Q, on_boundary):
    """Minimal solution on the boundary set of ``y_i = max(0, -mu_i + sum_j Q_ji y_j)``."""
    d = mu.size
    y = np.zeros(d)
    converged = False
    for _ in range(_MAX_RATE_ITERS):
        delta = 0.0
        scale = 1.0
        for i in range(d):
            if on_boundary[i]:
                s = -mu[i]
                for j in range(d):
                    s += Q[j, i] * y[j]
                v = s if s > 0.0 else 0.0
                diff = abs(v - y[i])
                if diff > delta:
                    delta = diff
                y[i] = v
                if v > scale:
                    scale = v
        if delta <= 1e-15 * scale:
            converged = True
            break
    if not converged:
        raise RuntimeError("regulator rate iteration did not converge")
    # exact solve on the active set
    k = 0
    for i in range(d):
        if y[i] > 0.0:
            k += 1
    if k == 0:
        return y
    idx = np.empty(k, dtype=np.int64)
    k = 0
    for i in range(d):
        if y[i] > 0.0:
            idx[k] = i
            k += 1
    A = np.zeros((k, k))
    rhs = np.zeros(k)
    for a in range(k):
        rhs[a] = -mu[idx[a]]
        A[a, a] = 1.0
        for b in range(k):
            A[a, b] -= Q[idx[b], idx[a]]
    sol = np.linalg.solve(A, rhs)
    exact = y.copy()
    ok = True
    for a in range(k):
        if sol[a] < 0.0:
            ok = False
        exact[idx[a]] = sol[a]
    if ok:
        for i in range(d):
            if on_boundary[i] and exact[i] == 0.0:
                s = -mu[i]
                for j in range(d):
                    s += Q[j, i] * exact[j]
                if s > 1e-13:
                    ok = False
    return exact if ok else y


@numba.njit(cache=True)
def _reflect_kernel(drift, Q, z0, jt, jc, jx, record):
    d = drift.size
    nj = jt.size
    cap = 2 + 2 * nj + (nj + 1) * (d + 1) if record else 1
    T = np.zeros(cap)
    Zs = np.zeros((cap, d))
    Ys = np.zeros((cap, d))
    Xs = np.zeros((cap, d))
    z = z0.copy()
    y = np.zeros(d)
    x = np.zeros(d)
    zmax = 1.0
    for i in range(d):
        if abs(z0[i]) > zmax:
            zmax = abs(z0[i])
    tol = BOUNDARY_TOL * zmax
    on_b = np.zeros(d, dtype=np.bool_)
    zdot = np.zeros(d)
    t = 0.0
    pos = 0
    Zs[0] = z
    k = 0
    max_segments = (nj + 1) * (4 * d + 4) + 16
    # regulator rates depend only on the boundary set; memoize them for small d
    use_memo = d <= _MEMO_MAX_DIM
    n_masks = 1 << d if use_memo else 1
    memo = np.zeros((n_masks, d))
    known = np.zeros(n_masks, dtype=np.bool_)
    segments = 0
    while True:
        t_next = jt[k] if k < nj else 1.0
        while t < t_next:
            segments += 1
            if segments > max_segments:
                raise RuntimeError("too many reflection segments")
            mask = 0
            for i in range(d):
                on_b[i] = z[i] <= tol
                if on_b[i]:
                    mask |= 1 << i
            if use_memo:
                if not known[mask]:
                    memo[mask] = _regulator_rates(drift, Q, on_b)
                    known[mask] = True
                ydot = memo[mask]
            else:
                ydot = _regulator_rates(drift, Q, on_b)
            for i in range(d):
                s = drift[i] + ydot[i]
                for j in range(d):
                    s -= Q[j, i] * ydot[j]
                zdot[i] = s
            dt = t_next - t
            hit = -1
            for i in range(d):
                if not on_b[i] and zdot[i] < 0.0:
                    th = z[i] / (-zdot[i])
                    if th < dt:
                        dt = th
                        hit = i
            for i in range(d):
                z[i] += zdot[i] * dt
                y[i] += ydot[i] * dt
                x[i] += drift[i] * dt
                if z[i] < 0.0:
                    z[i] = 0.0
            if hit >= 0:
                z[hit] = 0.0
                t = t + dt
            else:
                t = t_next
            if record:
                pos += 1
                T[pos] = t
                Zs[pos] = z
                Ys[pos] = y
                Xs[pos] = x
        if k >= nj:
            break
        while k < nj and jt[k] == t_next:
            z[jc[k]] += jx[k]
            x[jc[k]] += jx[k]
            k += 1
        if record:
            pos += 1
            T[pos] = t
            Zs[pos] = z
            Ys[pos] = y
            Xs[pos] = x
    if not record:
        Zs[0] = z
        Ys[0] = y
        Xs[0] = x
        T[0] = t
        return T, Zs, Ys, Xs
    return T[: pos + 1], Zs[: pos + 1], Ys[: pos + 1], Xs[: pos + 1]


def _inputs(network: FluidNetwork, skeleton: JumpSkeleton, z0):
    if skeleton.dim != network.d:
        raise ValueError("skeleton dimension does not match the network")
    z0 = np.zeros(network.d) if z0 is None else np.asarray(z0, dtype=float).copy()
    if np.any(z0 < 0):
        raise ValueError("initial workload must be non-negative")
    t, c, x = skeleton.merged()
    if np.any(x < 0):
        raise ValueError("reflection supports upward jumps only")
    return np.ascontiguousarray(skeleton.drift, dtype=float), z0, t, c, x


def reflect(network: FluidNetwork, skeleton: JumpSkeleton, z0=None) -> ReflectedPath:
    """Exact reflected path of ``z0 + skeleton`` through the network."""
    drift, z0, t, c, x = _inputs(network, skeleton, z0)
    try:
        T, Z, Y, X = _reflect_kernel(drift, network.Q, z0, t, c, x, True)
    except RuntimeError as exc:  # numba re-raises kernel errors as RuntimeError/Exception
        raise ReflectionError(str(exc)) from exc
    return ReflectedPath(T, Z, Y, X + z0)


def reflect_final(
    Q: np.ndarray, drift: np.ndarray, jt: np.ndarray, jc: np.ndarray, jx: np.ndarray, z0=None
) -> np.ndarray:
    """Reflected value at time 1 from already merged jump arrays (hot path)."""
    z0 = np.zeros(drift.size) if z0 is None else np.asarray(z0, dtype=float)
    _, Z, _, _ = _reflect_kernel(drift, Q, z0, jt, jc, jx, False)
    return Z[0]


def reflect_discrete_oracle(
    network: FluidNetwork, x_grid: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000
) -> tuple[np.ndarray, np.ndarray]:
    """Picard iteration of ``w -> max(0, running_sup(Q^T w - x))`` on a time grid.

    ``x_grid`` holds the free input including the initial workload, one row per grid
    time. Returns the regulator and the reflected path on the grid.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    Q = network.Q
    w = np.zeros_like(x_grid)
    for _ in range(max_iter):
        new = np.maximum(np.maximum.accumulate(w @ Q - x_grid, axis=0), 0.0)
        change = np.max(np.abs(new - w)) if w.size else 0.0
        w = new
        if change < tol:
            break
    else:
        raise ReflectionError("discrete oracle iteration cap exceeded")
    return w, x_grid + w - w @ Q


def sample_on_grid(skeleton: JumpSkeleton, z0, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid times ``0, h, ..., 1`` and the free input ``z0 + X`` at those times."""
    steps = int(round(1.0 / h))
    t = np.linspace(0.0, 1.0, steps + 1)
    x = np.column_stack([skeleton.value(t, i) for i in range(skeleton.dim)])
    return t, x + np.asarray(z0, dtype=float)


# Fluid-limit analytics ------------------------------------------------------


def r_star(network: FluidNetwork, overloaded: Iterable[int], tol: float = 1e-14) -> dict[int, float]:
    """Idle rates of the stations outside ``overloaded`` in the fluid limit.

    Iterates ``x -> max((R r - rho)_K + Q_KK^T x, 0)`` from zero, ``K`` being the
    complement of ``overloaded``.
    """
    over = set(int(i) for i in overloaded)
    K = [i for i in range(network.d) if i not in over]
    if not K:
        return {}
    base = (network.R @ network.r - network.rho)[K]
    QK = network.Q[np.ix_(K, K)]
    x = np.zeros(len(K))
    for _ in range(1_000_000):
        new = np.maximum(base + QK.T @ x, 0.0)
        if np.max(np.abs(new - x)) < tol:
            x = new
            break
        x = new
    return {i: float(v) for i, v in zip(K, x)}


def dz(network: FluidNetwork, c: Sequence[int], overloaded: Iterable[int]) -> float:
    """Growth rate of ``c^T Z`` while the stations in ``overloaded`` stay overloaded."""
    c = np.asarray(c)
    targets = [i for i in range(network.d) if c[i]]
    over = set(int(i) for i in overloaded)
    if over & set(targets):
        raise ValueError("overloaded stations must lie outside the target set")
    rs = r_star(network, over)
    Q, rp = network.Q, network.r_prime
    terms = []
    for i in targets:
        inflow = sum(Q[j, i] * rp[j] for j in range(network.d) if j != i)
        idle_in = sum(Q[j, i] * rs[j] for j in rs if j != i)
        terms.append(rs[i] - rp[i] + inflow - idle_in)
    return math.fsum(terms)


@dataclass(frozen=True)
class KnapsackResult:
    l_star: tuple[int, ...]
    rate: float
    multi_jump: tuple[int, ...] | None
    multi_jump_rate: float
    single_jump_station: int
    single_jump_rate: float

    @property
    def many_jumps_cheaper(self) -> bool:
        """Whether the cheapest overload pattern beats every single direct jump."""
        return self.multi_jump_rate < self.single_jump_rate


def solve_fluid_knapsack(
    network: FluidNetwork,
    c: Sequence[int],
    a: float,
    betas: Sequence[float],
    level_tol: float = 1e-12,
) -> KnapsackResult:
    """Cheapest set of overloaded stations driving ``c^T Z(1)`` above ``a``.

    Candidate patterns are 0/1 vectors on the non-target stations. A pattern is
    feasible when its growth rate exceeds ``a``; since the growth rate increases
    with the set, supersets of a feasible pattern are never cheaper and are pruned.
    The cheapest single direct jump into a target station is the alternative.

    Raises:
        DegenerateLevelError: some pattern has growth rate equal to ``a``.
        NonUniqueMinimizerError: two cheapest patterns tie.
    """
    from .jump_lattice import NonUniqueMinimizerError

    c = np.asarray(c)
    w = np.asarray(betas, dtype=float) - 1.0
    d = network.d
    free = [i for i in range(d) if not c[i]]
    targets = [i for i in range(d) if c[i]]
    rates = {}
    for size in range(len(free) + 1):
        for subset in itertools.combinations(free, size):
            g = dz(network, c, subset)
            if abs(g - a) <= level_tol:
                raise DegenerateLevelError("boundary-degenerate level a")
            rates[subset] = g
    feasible_min: list[tuple[int, ...]] = []
    best = math.inf
    found: list[frozenset] = []
    for size in range(len(free) + 1):
        for subset in itertools.combinations(free, size):
            s = frozenset(subset)
            if any(f <= s for f in found):
                continue
            if rates[subset] > a:
                found.append(s)
                cost = float(sum(w[i] for i in subset))
                if cost < best - 1e-12:
                    best, feasible_min = cost, [subset]
                elif abs(cost - best) <= 1e-12:
                    feasible_min.append(subset)
    if len(feasible_min) > 1:
        raise NonUniqueMinimizerError(f"non-unique minimizer: {feasible_min}")
    single_station = min(targets, key=lambda i: w[i])
    single_rate = float(w[single_station])
    multi = None
    if feasible_min:
        multi = tuple(1 if i in feasible_min[0] else 0 for i in range(d))
    if multi is not None and abs(best - single_rate) <= 1e-12:
        raise NonUniqueMinimizerError("non-unique minimizer: overload pattern ties single jump")
    if multi is not None and best < single_rate:
        l_star, r = multi, best
    else:
        l_star = tuple(1 if i == single_station else 0 for i in range(d))
        r = single_rate
    return KnapsackResult(l_star, r, multi, best, single_station, single_rate)

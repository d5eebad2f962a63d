"""Index-set combinatorics on the lattice of jump counts.

A lattice point ``l = (l_1, ..., l_d)`` counts big jumps per coordinate and costs
``rate(l) = sum_i w_i * l_i`` with ``w_i = beta_i - 1``. This module finds the
cheapest feasible point ``l*``, the minimal boundary set ``J`` of points that are
not strictly cheaper than ``l*``, and the reduced set used to build auxiliary events.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Iterable, Sequence

import numpy as np

IndexVector = tuple[int, ...]
RATE_TOL = 1e-9


class InfeasibleError(ValueError):
    pass


class NonUniqueMinimizerError(ValueError):
    pass


def _weights(w: Sequence[float]) -> tuple[float, ...]:
    w = tuple(float(x) for x in np.atleast_1d(w))
    if not w or any(not x > 0 for x in w):
        raise ValueError("rate weights must be strictly positive")
    return w


def rate_weights(betas: Sequence[float]) -> tuple[float, ...]:
    """Weights ``beta_i - 1`` for tail indices ``beta_i``."""
    return _weights([b - 1.0 for b in betas])


def rate(l: Sequence[int], w: Sequence[float]) -> float:
    """Cost ``sum_i w_i * l_i`` of a lattice point."""
    l = tuple(l)
    w = tuple(np.atleast_1d(w))
    if len(l) != len(w):
        raise ValueError(f"dimension mismatch: {len(l)} counts, {len(w)} weights")
    return float(math.fsum(wi * li for wi, li in zip(w, l)))


def _box(bounds: Sequence[int]) -> Iterable[IndexVector]:
    return itertools.product(*(range(b + 1) for b in bounds))


def in_strict_sublevel(l: Sequence[int], l_star: Sequence[int], w: Sequence[float]) -> bool:
    """Membership of the set of points other than ``l*`` costing at most ``rate(l*)``."""
    return tuple(l) != tuple(l_star) and rate(l, w) <= rate(l_star, w) + RATE_TOL


def solve_l_star(
    feasible: Callable[[IndexVector], bool],
    w: Sequence[float],
    max_count: int = 64,
) -> tuple[IndexVector, float]:
    """Cheapest lattice point accepted by a monotone feasibility predicate.

    A feasible diagonal point ``(k, ..., k)`` with ``k <= max_count`` bounds the optimal
    cost; every point within that cost is then scanned.

    Raises:
        InfeasibleError: no feasible point below the search bound.
        NonUniqueMinimizerError: two feasible points share the minimal cost.
    """
    w = _weights(w)
    d = len(w)
    upper = None
    for k in range(max_count + 1):
        if feasible((k,) * d):
            upper = rate((k,) * d, w)
            break
    if upper is None:
        raise InfeasibleError("infeasible")
    bounds = [int(math.floor(upper / wi + RATE_TOL)) for wi in w]
    best: list[IndexVector] = []
    best_rate = math.inf
    for l in _box(bounds):
        r = rate(l, w)
        if r > upper + RATE_TOL or r > best_rate + RATE_TOL:
            continue
        if not feasible(l):
            continue
        if r < best_rate - RATE_TOL:
            best, best_rate = [l], r
        else:
            best.append(l)
    if len(best) > 1:
        raise NonUniqueMinimizerError(f"non-unique minimizer: {sorted(best)}")
    return best[0], best_rate


def probe_monotone(
    feasible: Callable[[IndexVector], bool],
    d: int,
    rng: np.random.Generator,
    pairs: int = 100,
    max_count: int = 6,
) -> list[tuple[IndexVector, IndexVector]]:
    """Random pairs ``l <= m`` with ``feasible(l)`` but not ``feasible(m)``."""
    bad = []
    for _ in range(pairs):
        lo = rng.integers(0, max_count + 1, size=d)
        hi = lo + rng.integers(0, max_count + 1, size=d)
        l, m = tuple(int(x) for x in lo), tuple(int(x) for x in hi)
        if feasible(l) and not feasible(m):
            bad.append((l, m))
    return bad


def enumeration_bounds(l_star: Sequence[int], w: Sequence[float]) -> list[int]:
    """Per-coordinate scan bounds large enough to contain ``J``."""
    w = _weights(w)
    r2 = 2.0 * rate(l_star, w) + max(w)
    return [int(math.ceil(r2 / wi)) + 1 for wi in w]


def enumerate_J(l_star: Sequence[int], w: Sequence[float]) -> list[IndexVector]:
    """Minimal lattice points outside the strict sublevel set of ``l*``.

    A point ``l`` belongs to ``J`` when it is not in the sublevel set while every
    point strictly below it (componentwise ``<=`` and different) is. It suffices to
    check the immediate predecessors ``l - e_i`` because the sublevel set is closed
    under decreasing coordinates, except at ``l*`` itself.
    """
    l_star = tuple(int(x) for x in l_star)
    w = _weights(w)
    if len(l_star) != len(w):
        raise ValueError("dimension mismatch")
    r_star = rate(l_star, w)
    out = []
    for l in _box(enumeration_bounds(l_star, w)):
        if in_strict_sublevel(l, l_star, w):
            continue
        if l != l_star and all(a >= b for a, b in zip(l, l_star)):
            # l* lies strictly below l and l* is not in the sublevel set
            continue
        ok = True
        for i in range(len(l)):
            if l[i] == 0:
                continue
            below = l[:i] + (l[i] - 1,) + l[i + 1 :]
            if not in_strict_sublevel(below, l_star, w):
                ok = False
                break
        if ok and rate(l, w) >= r_star - RATE_TOL:
            out.append(l)
    return sorted(out)


def reduce_J(
    J: Iterable[Sequence[int]],
    l_star: Sequence[int],
    w: Sequence[float],
    drop: Iterable[Sequence[int]] = (),
) -> list[IndexVector]:
    """Reduced index set.

    ``drop`` lists the elements of ``J`` whose cylinder the target set is provably
    bounded away from; the rest form ``I``. From ``I`` we further remove every
    element costing more than twice ``rate(l*)`` whose cost no other element of
    ``I`` shares.
    """
    w = _weights(w)
    drop = {tuple(int(x) for x in l) for l in drop}
    kept = [tuple(int(x) for x in l) for l in J if tuple(int(x) for x in l) not in drop]
    r2 = 2.0 * rate(l_star, w)
    out = []
    for l in kept:
        r = rate(l, w)
        shared = any(abs(rate(m, w) - r) <= RATE_TOL for m in kept if m != l)
        if r > r2 + RATE_TOL and not shared:
            continue
        out.append(l)
    return sorted(out)


def solve_two_sided(
    feasible: Callable[[IndexVector], bool],
    alpha: float,
    beta: float,
    max_count: int = 64,
) -> tuple[IndexVector, list[IndexVector]]:
    """``(l_-*, l_+*)`` and its boundary set for weights ``(alpha - 1, beta - 1)``."""
    w = (alpha - 1.0, beta - 1.0)
    l_star, _ = solve_l_star(feasible, w, max_count=max_count)
    return l_star, enumerate_J(l_star, w)


def brute_force_J(l_star: Sequence[int], w: Sequence[float], bound: int) -> list[IndexVector]:
    """Direct evaluation of the definition of ``J`` on a box (test oracle).

    Every componentwise-smaller point is checked, not only the immediate predecessors.
    """
    l_star = tuple(l_star)
    w = tuple(w)
    pts = list(_box([bound] * len(w)))
    out = []
    for l in pts:
        if in_strict_sublevel(l, l_star, w):
            continue
        preds = _box(l)
        if all(in_strict_sublevel(m, l_star, w) for m in preds if m != l):
            out.append(l)
    return sorted(out)

"""Event-driven representations of scaled compound Poisson paths and random walks.

A :class:`JumpSkeleton` stores, per coordinate, a linear drift and finitely many
jumps on the scaled horizon ``(0, 1]``. Sizes are kept in scaled units (divided by
``n``), so predicates such as "more than ``k`` jumps above ``gamma``" read directly
in the scaled space.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .heavy_tails import TailDistribution


@dataclass(frozen=True)
class JumpSkeleton:
    """Piecewise linear path with jumps on ``[0, 1]``, one row per coordinate."""

    drift: np.ndarray
    epochs: tuple[np.ndarray, ...]
    sizes: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        drift = np.atleast_1d(np.asarray(self.drift, dtype=float))
        if len(self.epochs) != drift.size or len(self.sizes) != drift.size:
            raise ValueError("one epoch array and one size array per coordinate")
        epochs, sizes = [], []
        for t, x in zip(self.epochs, self.sizes):
            t = np.asarray(t, dtype=float)
            x = np.asarray(x, dtype=float)
            if t.shape != x.shape or t.ndim != 1:
                raise ValueError("epochs and sizes must be matching 1-d arrays")
            if t.size and (t[0] <= 0.0 or t[-1] > 1.0 or np.any(np.diff(t) <= 0.0)):
                raise ValueError("epochs must be strictly increasing inside (0, 1]")
            epochs.append(t)
            sizes.append(x)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "epochs", tuple(epochs))
        object.__setattr__(self, "sizes", tuple(sizes))

    @classmethod
    def empty(cls, drift: Sequence[float]) -> "JumpSkeleton":
        d = len(np.atleast_1d(drift))
        none = tuple(np.empty(0) for _ in range(d))
        return cls(np.asarray(drift, dtype=float), none, none)

    @property
    def dim(self) -> int:
        return self.drift.size

    def jump_count(self, i: int | None = None) -> int:
        if i is None:
            return sum(t.size for t in self.epochs)
        return self.epochs[i].size

    def value(self, t, i: int = 0) -> np.ndarray:
        """Right-continuous value of coordinate ``i`` at the query times ``t``."""
        t = np.asarray(t, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(self.sizes[i])))
        # searchsorted(side="right") counts jumps with epoch <= t
        k = np.searchsorted(self.epochs[i], t, side="right")
        return self.drift[i] * t + cum[k]

    def count_exceedances(self, i: int, threshold: float) -> int:
        """Number of jumps in coordinate ``i`` strictly larger than ``threshold``."""
        return int(np.count_nonzero(self.sizes[i] > threshold))

    def merged(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All jumps sorted by epoch as ``(epochs, coordinates, sizes)``.

        Ties across coordinates keep coordinate order (stable sort).
        """
        if self.jump_count() == 0:
            return np.empty(0), np.empty(0, dtype=np.int64), np.empty(0)
        t = np.concatenate(self.epochs)
        c = np.concatenate([np.full(e.size, i, dtype=np.int64) for i, e in enumerate(self.epochs)])
        x = np.concatenate(self.sizes)
        order = np.argsort(t, kind="stable")
        return t[order], c[order], x[order]

    def to_csv(self) -> str:
        """Debug dump as CSV rows ``coordinate,epoch,size``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["coordinate", "epoch", "size"])
        for i, (t, x) in enumerate(zip(self.epochs, self.sizes)):
            for ti, xi in zip(t, x):
                writer.writerow([i, f"{ti:.17g}", f"{xi:.17g}"])
        return buf.getvalue()


@dataclass(frozen=True)
class WalkPath:
    """Scaled random walk ``S_[nt] / n`` stored through its raw increments."""

    increments: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "increments", np.asarray(self.increments, dtype=float).ravel())

    @property
    def n(self) -> int:
        return self.increments.size

    def partial_sums(self) -> np.ndarray:
        """``S_0, S_1, ..., S_n`` (unscaled)."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    def value(self, t) -> np.ndarray:
        k = np.floor(np.asarray(t, dtype=float) * self.n + 1e-12).astype(np.int64)
        k = np.clip(k, 0, self.n)
        return self.partial_sums()[k] / self.n


def sorted_epochs(rng: np.random.Generator, m: int) -> np.ndarray:
    """``m`` sorted uniform epochs in ``(0, 1]``."""
    return np.sort(1.0 - rng.random(m))


def skeleton_from_counts(
    drift: Sequence[float], sizes: Sequence[np.ndarray], rng: np.random.Generator
) -> JumpSkeleton:
    """Attach sorted uniform epochs to per-coordinate size vectors."""
    epochs = tuple(sorted_epochs(rng, len(x)) for x in sizes)
    return JumpSkeleton(np.asarray(drift, dtype=float), epochs, tuple(np.asarray(x) for x in sizes))


def compensating_drift(rates: Sequence[float], dists: Sequence[TailDistribution]) -> np.ndarray:
    """``-lambda_i * E W_i`` per coordinate."""
    return np.array([-lam * d.mean() for lam, d in zip(rates, dists)])


def simulate_cpp_nominal(
    rates: Sequence[float],
    dists: Sequence[TailDistribution],
    n: float,
    rng: np.random.Generator,
    drift: Sequence[float] | None = None,
) -> JumpSkeleton:
    """Nominal scaled compound Poisson skeleton on ``[0, 1]``.

    Coordinate ``i`` gets a Poisson(``rates[i] * n``) number of jumps with sizes
    ``W / n``. Unless ``drift`` is given, each coordinate is compensated so that its
    mean is zero.
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if np.any(rates <= 0):
        raise ValueError("arrival rates must be positive")
    if len(dists) != rates.size:
        raise ValueError("one distribution per coordinate")
    sizes = []
    for lam, dist in zip(rates, dists):
        m = int(rng.poisson(lam * n))
        sizes.append(dist.sample(rng, m) / n)
    if drift is None:
        drift = compensating_drift(rates, dists)
    return skeleton_from_counts(drift, sizes, rng)


def count_exceedances(path: JumpSkeleton, i: int, threshold: float) -> int:
    return path.count_exceedances(i, threshold)

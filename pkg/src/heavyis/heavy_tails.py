"""Regularly varying jump and increment laws with exact tails and inverse-CDF samplers.

Three families are supported:

* ``pareto``: ``P(X > x) = (t_r / x)**beta`` for ``x >= t_r``.
* ``centered_pareto``: the same law shifted by its mean so that ``E X = 0``.
* ``two_sided_pareto_uniform``: Pareto right tail with mass ``p1`` above ``t_r``,
  Pareto left tail with mass ``p2`` below ``t_l < 0`` and the remaining mass spread
  uniformly on ``[t_l, t_r]``. Centered by default.

Every sampler maps one uniform to one draw through the exact inverse of the tail
function, so conditional and truncated draws need no rejection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PARETO = "pareto"
CENTERED_PARETO = "centered_pareto"
TWO_SIDED = "two_sided_pareto_uniform"
KINDS = (PARETO, CENTERED_PARETO, TWO_SIDED)

# Smallest uniform handed to an unbounded left-tail inverse.
_U_FLOOR = 2.0**-54


class EmptyConditioningError(ValueError):
    """Raised when a conditioning event has zero probability."""


@dataclass(frozen=True)
class TailDistribution:
    """Immutable description of a heavy-tailed law.

    The public methods describe ``X = X' - mean_shift`` where ``X'`` is the raw law
    given by the tail parameters. ``mean_shift`` is the mean of ``X'`` for centered
    kinds and zero otherwise.
    """

    kind: str
    beta: float
    t_r: float = 1.0
    alpha: float | None = None
    t_l: float | None = None
    p1: float = 1.0
    p2: float = 0.0
    centered: bool = False
    mean_shift: float = field(init=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if not self.t_r > 0:
            raise ValueError("t_r must be positive")
        if self.kind == TWO_SIDED:
            if self.alpha is None or not self.alpha > 1:
                raise ValueError("alpha must exceed 1")
            if self.t_l is None or not self.t_l < 0:
                raise ValueError("t_l must be negative")
            if self.p1 < 0 or self.p2 < 0 or self.p1 + self.p2 > 1 + 1e-15:
                raise ValueError("need p1, p2 >= 0 and p1 + p2 <= 1")
            if self.p1 == 0 or self.p2 == 0:
                raise ValueError("two-sided law needs positive tail masses")
        else:
            if self.alpha is not None or self.t_l is not None:
                raise ValueError("one-sided kinds take no left-tail parameters")
            if self.p1 != 1.0 or self.p2 != 0.0:
                raise ValueError("one-sided kinds have p1 = 1 and p2 = 0")
        if self.kind == CENTERED_PARETO and not self.centered:
            raise ValueError("centered_pareto must be centered")
        if self.kind == PARETO and self.centered:
            raise ValueError("use centered_pareto for a centered Pareto law")
        object.__setattr__(self, "mean_shift", self.raw_mean() if self.centered else 0.0)

    # Construction helpers -------------------------------------------------

    @classmethod
    def pareto(cls, beta: float, t_r: float = 1.0) -> "TailDistribution":
        return cls(PARETO, beta=beta, t_r=t_r)

    @classmethod
    def centered_pareto(cls, beta: float, t_r: float = 1.0) -> "TailDistribution":
        return cls(CENTERED_PARETO, beta=beta, t_r=t_r, centered=True)

    @classmethod
    def two_sided(
        cls,
        alpha: float,
        beta: float,
        p1: float,
        p2: float,
        t_r: float = 1.0,
        t_l: float = -1.0,
        centered: bool = True,
    ) -> "TailDistribution":
        return cls(
            TWO_SIDED, beta=beta, t_r=t_r, alpha=alpha, t_l=t_l, p1=p1, p2=p2, centered=centered
        )

    @property
    def two_sided_kind(self) -> bool:
        return self.kind == TWO_SIDED

    @property
    def middle_mass(self) -> float:
        return max(0.0, 1.0 - self.p1 - self.p2) if self.two_sided_kind else 0.0

    # Moments --------------------------------------------------------------

    def raw_mean(self) -> float:
        """Mean of the unshifted law ``X'``."""
        right = self.p1 * self.beta * self.t_r / (self.beta - 1.0)
        if not self.two_sided_kind:
            return right
        left = self.p2 * self.alpha * self.t_l / (self.alpha - 1.0)
        return right + left + self.middle_mass * 0.5 * (self.t_l + self.t_r)

    def mean(self) -> float:
        return self.raw_mean() - self.mean_shift

    def raw_second_moment(self) -> float:
        """``E[X'^2]``; infinite when a tail index is at most 2."""
        if self.beta <= 2 or (self.two_sided_kind and self.alpha <= 2):
            return math.inf
        right = self.p1 * self.beta * self.t_r**2 / (self.beta - 2.0)
        if not self.two_sided_kind:
            return right
        left = self.p2 * self.alpha * self.t_l**2 / (self.alpha - 2.0)
        mid = self.middle_mass * (self.t_r**3 - self.t_l**3) / (3.0 * (self.t_r - self.t_l))
        return right + left + mid

    def variance(self) -> float:
        return self.raw_second_moment() - self.raw_mean() ** 2

    # Raw tail functions and their inverses (vectorised) ------------------

    def raw_sf(self, y):
        """``P(X' > y)``."""
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            tail = self.p1 * (self.t_r / np.maximum(y, self.t_r)) ** self.beta
            if not self.two_sided_kind:
                return np.where(y >= self.t_r, tail, 1.0)
            width = self.t_r - self.t_l
            mid = self.p1 + self.middle_mass * (self.t_r - y) / width
            left = 1.0 - self.p2 * (self.t_l / np.minimum(y, self.t_l)) ** self.alpha
        return np.where(y >= self.t_r, tail, np.where(y >= self.t_l, mid, left))

    def raw_cdf(self, y):
        """``P(X' <= y)``, computed without cancellation in the left tail."""
        y = np.asarray(y, dtype=float)
        if not self.two_sided_kind:
            return 1.0 - self.raw_sf(y)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            left = self.p2 * (self.t_l / np.minimum(y, self.t_l)) ** self.alpha
            mid = self.p2 + self.middle_mass * (y - self.t_l) / (self.t_r - self.t_l)
        return np.where(y <= self.t_l, left, np.where(y <= self.t_r, mid, 1.0 - self.raw_sf(y)))

    def raw_isf(self, s):
        """Inverse of ``P(X' > y) = s`` for ``s`` in ``(0, 1]``."""
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            tail = self.t_r * (np.minimum(s, self.p1) / self.p1) ** (-1.0 / self.beta)
            if not self.two_sided_kind:
                return tail
            width = self.t_r - self.t_l
            m = self.middle_mass
            mid = self.t_r - (s - self.p1) / m * width if m > 0 else np.full_like(s, self.t_r)
            u = np.maximum(1.0 - s, _U_FLOOR)
            left = self.t_l * (np.minimum(u, self.p2) / self.p2) ** (-1.0 / self.alpha)
        return np.where(s <= self.p1, tail, np.where(s < 1.0 - self.p2, mid, left))

    def raw_ppf(self, u):
        """Inverse of ``P(X' <= y) = u``; accurate in both tails."""
        u = np.asarray(u, dtype=float)
        if not self.two_sided_kind:
            return self.raw_isf(1.0 - u)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            uu = np.maximum(u, _U_FLOOR)
            left = self.t_l * (np.minimum(uu, self.p2) / self.p2) ** (-1.0 / self.alpha)
            m = self.middle_mass
            width = self.t_r - self.t_l
            mid = self.t_l + (u - self.p2) / m * width if m > 0 else np.full_like(u, self.t_l)
            right = self.raw_isf(np.maximum(1.0 - u, 2.0**-53))
        return np.where(u <= self.p2, left, np.where(u < 1.0 - self.p1, mid, right))

    # Public tail functions of X ------------------------------------------

    def tail_right(self, x):
        """Exact ``P(X > x)``."""
        out = self.raw_sf(np.asarray(x, dtype=float) + self.mean_shift)
        return float(out) if out.ndim == 0 else out

    def tail_left(self, x):
        """Exact ``P(X < x)`` (equal to ``P(X <= x)``, the law is continuous)."""
        out = self.raw_cdf(np.asarray(x, dtype=float) + self.mean_shift)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        return self.tail_left(x)

    def window_prob(self, lo: float, hi: float) -> float:
        """``P(lo < X <= hi)``."""
        if not hi > lo:
            return 0.0
        return max(0.0, self.tail_right(lo) - self.tail_right(hi))

    def support_min(self) -> float:
        return -math.inf if self.two_sided_kind else self.t_r - self.mean_shift

    # Uniform -> draw transforms used by vectorised kernels ---------------

    def from_uniform(self, u):
        """Nominal draw from uniforms in ``[0, 1)``; ``u = 0`` gives the left end."""
        u = np.asarray(u, dtype=float)
        if not self.two_sided_kind:
            return self.raw_isf(1.0 - u) - self.mean_shift
        return self.raw_ppf(u) - self.mean_shift

    def right_from_uniform(self, x: float, r):
        """Map uniforms to draws of ``X`` given ``X > x``."""
        y_thr = x + self.mean_shift
        s_thr = float(self.raw_sf(y_thr))
        if not s_thr > 0:
            raise EmptyConditioningError("empty conditioning event")
        s = s_thr * (1.0 - np.asarray(r, dtype=float))
        y = self.raw_isf(s) - self.mean_shift
        return np.maximum(y, np.nextafter(x, math.inf))

    def window_from_uniform(self, lo: float, hi: float, r):
        """Map uniforms to draws of ``X`` given ``lo < X <= hi``."""
        s_lo = float(self.raw_sf(lo + self.mean_shift))
        s_hi = float(self.raw_sf(hi + self.mean_shift)) if math.isfinite(hi) else 0.0
        if not s_lo - s_hi > 0:
            raise EmptyConditioningError("empty conditioning event")
        s = s_hi + np.asarray(r, dtype=float) * (s_lo - s_hi)
        s = np.maximum(s, np.nextafter(0.0, 1.0))
        y = self.raw_isf(s) - self.mean_shift
        return np.clip(y, np.nextafter(lo, math.inf), hi)

    def left_from_uniform(self, x: float, r):
        """Map uniforms to draws of ``X`` given ``X < x``."""
        y_thr = x + self.mean_shift
        f_thr = float(self.raw_cdf(y_thr))
        if not f_thr > 0:
            raise EmptyConditioningError("empty conditioning event")
        u = f_thr * (1.0 - np.asarray(r, dtype=float))
        y = self.raw_ppf(u) - self.mean_shift
        return np.minimum(y, np.nextafter(x, -math.inf))

    # Samplers -------------------------------------------------------------

    def sample(self, rng: np.random.Generator, size=None):
        """Nominal draws; one uniform per draw."""
        out = self.from_uniform(rng.random(size))
        return float(out) if size is None else out

    def sample_conditional_right(self, threshold: float, rng: np.random.Generator, size=None):
        out = self.right_from_uniform(threshold, rng.random(size))
        return float(out) if size is None else out

    def sample_truncated_right(self, lo: float, hi: float, rng: np.random.Generator, size=None):
        out = self.window_from_uniform(lo, hi, rng.random(size))
        return float(out) if size is None else out

    def sample_conditional_left(self, threshold: float, rng: np.random.Generator, size=None):
        out = self.left_from_uniform(threshold, rng.random(size))
        return float(out) if size is None else out


def tail_right(d: TailDistribution, x):
    """``P(X > x)`` for the (possibly centered) law ``d``."""
    return d.tail_right(x)


def tail_left(d: TailDistribution, x):
    return d.tail_left(x)


def sample_nominal(d: TailDistribution, rng: np.random.Generator, size=None):
    return d.sample(rng, size)


def sample_conditional_right(d: TailDistribution, threshold: float, rng, size=None):
    return d.sample_conditional_right(threshold, rng, size)


def sample_truncated_right(d: TailDistribution, lo: float, hi: float, rng, size=None):
    return d.sample_truncated_right(lo, hi, rng, size)


def sample_conditional_left(d: TailDistribution, threshold: float, rng, size=None):
    return d.sample_conditional_left(threshold, rng, size)

import math

import numpy as np
import pytest

from heavyis.estimator_core import replication_rng
from heavyis.heavy_tails import TailDistribution
from heavyis.path_model import (
    JumpSkeleton,
    WalkPath,
    compensating_drift,
    count_exceedances,
    simulate_cpp_nominal,
    skeleton_from_counts,
)


def test_skeleton_value_is_right_continuous():
    sk = JumpSkeleton(np.array([-1.0]), (np.array([0.25, 0.5]),), (np.array([2.0, 3.0]),))
    assert sk.value(0.0) == 0.0
    assert sk.value(0.25) == pytest.approx(-0.25 + 2.0)
    assert sk.value(np.nextafter(0.25, 0)) == pytest.approx(-0.25, abs=1e-12)
    assert sk.value(1.0) == pytest.approx(4.0)


def test_skeleton_rejects_bad_epochs():
    with pytest.raises(ValueError):
        JumpSkeleton(np.array([0.0]), (np.array([0.5, 0.5]),), (np.array([1.0, 1.0]),))
    with pytest.raises(ValueError):
        JumpSkeleton(np.array([0.0]), (np.array([0.0]),), (np.array([1.0]),))
    with pytest.raises(ValueError):
        JumpSkeleton(np.array([0.0]), (np.array([1.5]),), (np.array([1.0]),))


def test_count_exceedances_examples():
    assert count_exceedances(JumpSkeleton.empty([0.0]), 0, 1.0) == 0
    sk = JumpSkeleton(np.array([0.0]), (np.array([0.1, 0.2, 0.3]),), (np.array([0.5, 1.3, 2.0]),))
    assert count_exceedances(sk, 0, 1.0) == 2


def test_count_exceedances_matches_naive_scan(rng):
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        sizes = [rng.exponential(size=int(rng.integers(0, 8))) for _ in range(d)]
        sk = skeleton_from_counts(np.zeros(d), sizes, rng)
        for i in range(d):
            thr = float(rng.exponential())
            naive = 0
            for x in sk.sizes[i]:
                if x > thr:
                    naive += 1
            assert sk.count_exceedances(i, thr) == naive


def test_merged_is_stable_across_coordinates():
    sk = JumpSkeleton(
        np.zeros(2), (np.array([0.2, 0.7]), np.array([0.2, 0.5])), (np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    )
    t, c, x = sk.merged()
    assert list(t) == [0.2, 0.2, 0.5, 0.7]
    assert list(c) == [0, 1, 1, 0]
    assert list(x) == [1.0, 3.0, 4.0, 2.0]


def test_csv_dump():
    sk = JumpSkeleton(np.zeros(1), (np.array([0.5]),), (np.array([0.25]),))
    assert sk.to_csv() == "coordinate,epoch,size\n0,0.5,0.25\n"


def test_walk_path_value():
    w = WalkPath([1.0, -2.0, 4.0, 1.0])
    assert w.value(0.0) == 0.0
    assert w.value(0.5) == pytest.approx(-1.0 / 4)
    assert w.value(0.74) == pytest.approx(-1.0 / 4)
    assert w.value(1.0) == pytest.approx(4.0 / 4)


def test_nominal_moments():
    dist = TailDistribution.pareto(5.0)
    n, reps = 100, 100_000
    counts = np.empty(reps)
    finals = np.empty(reps)
    for k in range(reps):
        sk = simulate_cpp_nominal([1.0], [dist], n, replication_rng(11, k))
        counts[k] = sk.jump_count(0)
        finals[k] = float(sk.value(1.0))
    assert abs(counts.mean() - n) < 4 * math.sqrt(n / reps)
    var_theory = dist.raw_second_moment() / n
    assert abs(finals.mean()) < 4 * math.sqrt(var_theory / reps)
    assert finals.var() == pytest.approx(var_theory, rel=0.05)


def test_compensating_drift():
    d = TailDistribution.pareto(2.5, t_r=0.3)
    assert compensating_drift([2.0], [d])[0] == pytest.approx(-2.0 * d.mean())


def test_deterministic_replay():
    d = TailDistribution.centered_pareto(1.45)
    a = simulate_cpp_nominal([1.0, 2.0], [d, d], 50, replication_rng(3, 17))
    b = simulate_cpp_nominal([1.0, 2.0], [d, d], 50, replication_rng(3, 17))
    assert a.to_csv() == b.to_csv()

import itertools
import math

import numpy as np
import pytest
from scipy import stats

from heavyis.estimator_core import prob_B_1d
from heavyis.estimator_multi import (
    DisjointBlock,
    MultiAuxiliary,
    block_probability,
    coordinate_means,
    decompose_blocks,
    in_union,
    prob_B_multi,
    sample_path_conditional_multi,
)
from heavyis.heavy_tails import TailDistribution


def random_entries(rng, d, size):
    entries = set()
    while len(entries) < size:
        l = tuple(int(x) for x in rng.integers(0, 4, size=d))
        if any(l):
            entries.add(l)
    return sorted(entries)


def block_mask(block: DisjointBlock, counts: np.ndarray) -> np.ndarray:
    lo = np.array(block.lower, dtype=float)
    hi = np.array(block.upper, dtype=float)
    return np.all((counts >= lo) & (counts <= hi), axis=1)


def union_mask(J, counts: np.ndarray) -> np.ndarray:
    return np.any([np.all(counts >= np.array(l), axis=1) for l in J], axis=0)


def test_single_block_for_single_entry():
    assert decompose_blocks([(2, 0, 1)]) == [DisjointBlock((2, 0, 1), (math.inf, math.inf, math.inf))]


def test_fluid_reduced_set_gives_two_blocks():
    blocks = decompose_blocks([(1, 1, 0), (0, 0, 1)])
    assert blocks == [
        DisjointBlock((0, 0, 1), (math.inf, math.inf, math.inf)),
        DisjointBlock((1, 1, 0), (math.inf, math.inf, 0)),
    ]


def test_blocks_partition_union_on_random_counts():
    rng = np.random.default_rng(11)
    for _ in range(20):
        d = int(rng.integers(1, 4))
        J = random_entries(rng, d, int(rng.integers(1, min(6, 3**d) + 1)))
        counts = rng.integers(0, 6, size=(100_000, d))
        masks = np.array([block_mask(b, counts) for b in decompose_blocks(J)])
        assert masks.sum(axis=0).max() <= 1
        np.testing.assert_array_equal(masks.any(axis=0), union_mask(J, counts))
        sample = counts[:200]
        assert [in_union(c, J) for c in sample] == list(union_mask(J, sample))


def test_partition_identity_random_parameters():
    rng = np.random.default_rng(12)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        J = random_entries(rng, d, int(rng.integers(1, min(6, 3**d) + 1)))
        n = float(rng.uniform(5, 50))
        dists = [TailDistribution.pareto(float(b)) for b in rng.uniform(1.2, 3.0, size=d)]
        gammas = rng.uniform(0.05, 0.5, size=d)
        rates = rng.uniform(0.5, 2.0, size=d)
        means = coordinate_means(n, rates, dists, gammas)
        total = math.fsum(block_probability(b, means) for b in decompose_blocks(J))
        assert total == pytest.approx(prob_B_multi(n, rates, dists, J, gammas), rel=1e-12)


def test_single_entry_reduces_to_one_dimension():
    dist = TailDistribution.centered_pareto(1.45)
    for n in (100, 1000):
        expected = prob_B_1d(n, 1.0, 2, dist.tail_right(0.13 * n))
        assert prob_B_multi(n, [1.0], [dist], [(2,)], [0.13]) == pytest.approx(expected, rel=1e-12)


def test_prob_B_multi_count_level_monte_carlo():
    rng = np.random.default_rng(13)
    n, draws = 10.0, 10_000_000
    dists = [TailDistribution.pareto(1.5), TailDistribution.pareto(2.5)]
    gammas = [0.4, 0.2]
    J = [(2, 0), (1, 1)]
    tails = [d.tail_right(n * g) for d, g in zip(dists, gammas)]
    counts = np.column_stack([rng.binomial(rng.poisson(n, size=draws), p) for p in tails])
    freq = union_mask(J, counts).mean()
    exact = prob_B_multi(n, [1.0, 1.0], dists, J, gammas)
    assert abs(freq - exact) < 4 * math.sqrt(exact * (1 - exact) / draws)


@pytest.fixture(scope="module")
def toy_draws():
    n = 4.0
    dists = (TailDistribution.pareto(1.5), TailDistribution.pareto(2.0))
    aux = MultiAuxiliary(n, (1.0, 1.0), dists, [(2, 0), (1, 1), (0, 2)], (0.3, 0.25))
    rng = np.random.default_rng(14)
    blocks, counts = [], []
    for _ in range(100_000):
        sizes, b, _ = aux.sample_sizes(rng)
        blocks.append(b)
        counts.append(tuple(aux.exceedance_counts(sizes)))
    return aux, np.array(blocks), counts


def test_draws_lie_in_their_block(toy_draws):
    aux, blocks, counts = toy_draws
    for b, c in zip(blocks[:5000], counts[:5000]):
        assert aux.blocks[b].contains(c)
        assert aux.contains(c)


def test_block_frequencies_match_weights(toy_draws):
    aux, blocks, _ = toy_draws
    observed = np.bincount(blocks, minlength=len(aux.blocks))
    assert stats.chisquare(observed, aux.block_weights * blocks.size).pvalue > 0.01


def test_joint_count_law_matches_enumeration(toy_draws):
    aux, _, counts = toy_draws
    mu = aux.means
    cells, probs = [], []
    for k in itertools.product(range(12), repeat=2):
        if in_union(k, aux.J):
            cells.append(k)
            probs.append(stats.poisson.pmf(k[0], mu[0]) * stats.poisson.pmf(k[1], mu[1]) / aux.prob)
    probs = np.array(probs)
    tally: dict = {}
    for c in counts:
        tally[c] = tally.get(c, 0) + 1
    obs = np.array([tally.get(c, 0) for c in cells], dtype=float)
    exp = probs * len(counts)
    big = exp >= 5
    obs = np.append(obs[big], len(counts) - obs[big].sum())
    exp = np.append(exp[big], len(counts) - exp[big].sum())
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_multi_path_sampler_stays_in_B():
    dists = (TailDistribution.pareto(1.5), TailDistribution.pareto(2.0))
    aux = MultiAuxiliary(50.0, (1.0, 2.0), dists, [(1, 1), (0, 2)], (0.2, 0.1))
    rng = np.random.default_rng(15)
    for _ in range(300):
        path, iters = sample_path_conditional_multi(aux, rng)
        counts = [path.count_exceedances(i, g) for i, g in enumerate(aux.gammas)]
        assert aux.contains(counts)
        assert iters >= 1.0
    np.testing.assert_allclose(path.drift, [-1.0 * dists[0].mean(), -2.0 * dists[1].mean()])


def test_multi_auxiliary_validation():
    dist = TailDistribution.pareto(1.5)
    with pytest.raises(ValueError):
        MultiAuxiliary(10.0, (1.0,), (dist,), [(1, 1)], (0.1,))
    with pytest.raises(ValueError):
        MultiAuxiliary(10.0, (1.0,), (dist,), [(1,)], (0.0,))
    with pytest.raises(ValueError):
        decompose_blocks([])

"""End-to-end acceptance criteria, one test per criterion."""

import functools
import itertools
import math

import numpy as np
from scipy import stats

from heavyis.apps import barrier, fluid, ruin
from heavyis.cli import build_config, run_experiment
from heavyis.estimator_core import MixtureConfig, estimate, prob_B_1d, sample_path_conditional_1d
from heavyis.estimator_multi import MultiAuxiliary, in_union, prob_B_multi
from heavyis.heavy_tails import TailDistribution
from heavyis.jump_lattice import brute_force_J, enumerate_J, enumeration_bounds
from heavyis.skorokhod import dz, reflect, reflect_discrete_oracle, sample_on_grid, solve_fluid_knapsack
from oracles import (
    at_times,
    definition_J,
    pooled_chisquare,
    random_network,
    random_skeleton,
    skeleton,
)

SEED = 3
MC_DRAWS = 10_000_000
PARETO = TailDistribution.centered_pareto(1.45)
RUIN = ruin.RuinSpec(2.0, 1.2, 0.05, PARETO)
TWO_SIDED = TailDistribution.two_sided(2.0, 1.5, 1 / 3, 1 / 3)
BARRIER = barrier.BarrierSpec(2.0, 1.5, 0.15, TWO_SIDED, 0.75, 0.75)


@functools.cache
def grid_rows(app: str) -> tuple[dict, ...]:
    return tuple(run_experiment(build_config({}, app=app, seed=SEED)))


def row_at(app: str, n: int) -> dict:
    return next(r for r in grid_rows(app) if r["n"] == n)


def overlaps(row: dict, paper_estimate: float, paper_pr: float) -> bool:
    gap = abs(row["estimate"] - paper_estimate)
    return gap <= row["ci_radius_95"] + paper_pr * paper_estimate


def cell(row: dict) -> str:
    return f"n={row['n']}: {row['estimate']:.4g} PR {row['precision_ratio']:.3f}"


def test_criterion_1_ruin_table(criterion_log):
    low, high = row_at("ruin", 1100), row_at("ruin", 2600)
    ci_ok = overlaps(low, 2.188e-4, 0.052) and overlaps(high, 9.603e-5, 0.055)
    pr_ok = all(0.03 <= r["precision_ratio"] <= 0.08 for r in (low, high))
    ok = ci_ok and pr_ok
    criterion_log(1, ok, f"{cell(low)}; {cell(high)}; CI overlap {ci_ok}, PR in [0.03, 0.08] {pr_ok}")
    assert ok


def test_criterion_2_asymptotic_slope(criterion_log):
    rows = grid_rows("ruin")
    slope = stats.linregress(np.log([r["n"] for r in rows]), np.log([r["estimate"] for r in rows])).slope
    target = RUIN.l_star * (1 - 1.45)
    ok = abs(slope - target) <= 0.15
    criterion_log(2, ok, f"slope {slope:.3f} vs {target:.2f}")
    assert ok


def test_criterion_3_barrier_table(criterion_log):
    low, high = row_at("barrier", 250), row_at("barrier", 1500)
    ok = overlaps(low, 3.913e-7, 0.043) and overlaps(high, 2.471e-8, 0.044)
    criterion_log(3, ok, f"{cell(low)}; {cell(high)}")
    assert ok


def test_criterion_4_fluid_table_and_analytics(criterion_log, network):
    row = row_at("fluid", 1200)
    c = (0, 0, 1)
    analytic = (
        abs(dz(network, c, {0, 1}) - 0.1) <= 1e-12
        and abs(dz(network, c, {0}) - 0.02) <= 1e-12
        and abs(dz(network, c, {1}) - 0.02) <= 1e-12
        and solve_fluid_knapsack(network, c, 0.05, (1.5, 1.5, 2.2)).l_star == (1, 1, 0)
    )
    ci_ok = overlaps(row, 7.719e-2, 0.045)
    ok = analytic and ci_ok
    criterion_log(4, ok, f"{cell(row)}; analytics {analytic}")
    assert ok


def test_criterion_5_precision_ratio_stability(criterion_log):
    spreads = {}
    for app in ("ruin", "barrier", "fluid"):
        prs = [r["precision_ratio"] for r in grid_rows(app)]
        spreads[app] = max(prs) / min(prs)
    ok = all(s <= 2.0 for s in spreads.values())
    criterion_log(5, ok, ", ".join(f"{a} max/min {s:.2f}" for a, s in spreads.items()))
    assert ok


def agree(is_rep, crude) -> tuple[bool, str]:
    p, se = crude
    combined = math.hypot(is_rep.std_err, se)
    ok = abs(is_rep.estimate - p) <= 3 * combined
    return ok, f"IS {is_rep.estimate:.4g} vs crude {p:.4g} ({abs(is_rep.estimate - p) / combined:.2f} SE)"


def test_criterion_6_crude_monte_carlo(criterion_log, fluid_spec, network):
    checks = []
    n = 60
    ruin_is = estimate(ruin.RuinProblem(RUIN, n, 0.13), MixtureConfig(0.05, n, 200_000, SEED))
    checks.append(("ruin n=60",) + agree(ruin_is, ruin.crude_monte_carlo(RUIN, n, MC_DRAWS, SEED)))

    small = barrier.BarrierSpec(1.0, 0.75, 0.15, TWO_SIDED, 0.375, 0.375)
    assert barrier.barrier_gamma_admissible(small)
    n = 10
    bar_is = estimate(barrier.BarrierProblem(small, n), MixtureConfig(0.05, n, 200_000, SEED))
    checks.append(("barrier n=10",) + agree(bar_is, barrier.crude_monte_carlo(small, n, MC_DRAWS, SEED)))

    n = 40
    crude = fluid.crude_monte_carlo(fluid_spec, n, MC_DRAWS, SEED)
    wide = fluid.FluidSpec(network, (0, 0, 1), 0.05, (1.5, 1.5, 2.2), (0.2, 0.2, 0.4))
    for label, spec in (("fluid n=40", fluid_spec), ("fluid n=40 wide thresholds", wide)):
        rep = estimate(fluid.FluidProblem(spec, n), MixtureConfig(0.05, n, 50_000, SEED))
        checks.append((label,) + agree(rep, crude))
    ok = all(c[1] for c in checks)
    criterion_log(6, ok, "; ".join(f"{c[0]}: {c[2]}" for c in checks))
    assert ok


def within_4se(freq: float, exact: float, draws: int) -> bool:
    return abs(freq - exact) <= 4 * math.sqrt(max(exact * (1 - exact), 1e-300) / draws)


def thinned_counts(rng, n: float, p: float, draws: int) -> np.ndarray:
    return rng.binomial(rng.poisson(n, size=draws), p)


def test_criterion_7_closed_forms(criterion_log, fluid_spec):
    rng = np.random.default_rng(7)
    results = {}

    exact = prob_B_1d(1000, 1.0, 2, 1e-4)
    results["prob_B_1d"] = within_4se(np.mean(thinned_counts(rng, 1000, 1e-4, MC_DRAWS) >= 2), exact, MC_DRAWS)

    n = 1100
    q = ruin.window_prob(n, RUIN, 0.13)
    exact = ruin.ruin_prob_B(n, RUIN, 0.13)
    results["ruin_prob_B"] = within_4se(np.mean(rng.binomial(n, q, size=MC_DRAWS) >= 2), exact, MC_DRAWS)

    n = 250
    p_up, p_down = barrier.tail_probs(n, BARRIER)
    first_down = rng.geometric(p_down, size=MC_DRAWS)
    later = np.clip(n - first_down, 0, None)
    hit = (first_down <= n) & (rng.binomial(later, p_up) >= 1)
    results["barrier_prob_B"] = within_4se(hit.mean(), barrier.barrier_prob_B(n, BARRIER), MC_DRAWS)

    n = 1200
    tails = [d.tail_right(n * g) for d, g in zip(fluid_spec.dists, fluid_spec.gammas)]
    counts = np.column_stack([thinned_counts(rng, n, p, MC_DRAWS) for p in tails])
    in_b = np.any([np.all(counts >= np.array(l), axis=1) for l in fluid_spec.J_reduced], axis=0)
    closed = fluid.fluid_prob_B(n, fluid_spec)
    results["fluid_prob_B"] = within_4se(in_b.mean(), closed, MC_DRAWS)
    multi_fluid = prob_B_multi(n, (1.0,) * 3, fluid_spec.dists, fluid_spec.J_reduced, fluid_spec.gammas)
    results["fluid vs multi 1e-12"] = abs(closed - multi_fluid) <= 1e-12 * multi_fluid

    dists = [TailDistribution.pareto(1.5), TailDistribution.pareto(2.5)]
    J, gammas, n = [(2, 0), (1, 1)], [0.4, 0.2], 10.0
    tails = [d.tail_right(n * g) for d, g in zip(dists, gammas)]
    counts = np.column_stack([thinned_counts(rng, n, p, MC_DRAWS) for p in tails])
    in_b = np.any([np.all(counts >= np.array(l), axis=1) for l in J], axis=0)
    results["prob_B_multi"] = within_4se(in_b.mean(), prob_B_multi(n, [1.0, 1.0], dists, J, gammas), MC_DRAWS)

    ok = all(results.values())
    criterion_log(7, ok, ", ".join(f"{k} {'ok' if v else 'off'}" for k, v in results.items()))
    assert ok


def count_law_pvalue(samples, pmf_of) -> float:
    keys = sorted(set(samples) | set(range(min(samples), max(samples) + 1)))
    observed = np.array([samples.count(k) for k in keys], dtype=float)
    expected = np.array([pmf_of(k) for k in keys]) * len(samples)
    return pooled_chisquare(observed, expected)


def small_instance_pvalues(fluid_net) -> dict[str, float]:
    pvals = {}
    rng = np.random.default_rng(8)
    draws = 20_000

    n, gamma = 4, 0.5
    p = PARETO.tail_right(n * gamma)
    mu = n * p
    ks = [sample_path_conditional_1d(n, 1.0, PARETO, 2, gamma, rng)[0].count_exceedances(0, gamma)
          for _ in range(draws)]
    pvals["compound Poisson n=4"] = count_law_pvalue(
        ks, lambda k: stats.poisson.pmf(k, mu) / stats.poisson.sf(1, mu) if k >= 2 else 0.0
    )

    n = 12
    problem = ruin.RuinProblem(RUIN, n, 0.13)
    q = ruin.window_prob(n, RUIN, 0.13)
    ks = [problem.aux_count(problem.sample_conditional(rng)[0]) for _ in range(draws)]
    pvals["ruin n=12"] = count_law_pvalue(
        ks, lambda k: stats.binom.pmf(k, n, q) / stats.binom.sf(1, n, q) if k >= 2 else 0.0
    )

    n = 4
    spec = barrier.BarrierSpec(2.0, 1.5, 0.15, TWO_SIDED, 0.3, 0.3)
    prob = barrier.BarrierProblem(spec, n)
    lo, hi = -n * spec.gamma_minus, n * spec.gamma_plus
    p_up, p_down = barrier.tail_probs(n, spec)
    mass = {1: p_up, -1: p_down, 0: 1 - p_up - p_down}
    patterns = [s for s in itertools.product((-1, 0, 1), repeat=n)
                if -1 in s and 1 in s and s.index(-1) < n - 1 - s[::-1].index(1)]
    index = {s: i for i, s in enumerate(patterns)}
    observed = np.zeros(len(patterns))
    for _ in range(draws):
        y = prob.sample_conditional(rng)[0]
        observed[index[tuple(int(v) for v in np.where(y > hi, 1, np.where(y < lo, -1, 0)))]] += 1
    exact = np.array([math.prod(mass[x] for x in s) for s in patterns])
    pvals["barrier n=4"] = pooled_chisquare(observed, exact / exact.sum() * draws)

    spec = fluid.FluidSpec(fluid_net, (0, 0, 1), 0.05, (1.5, 1.5, 2.2), (0.2, 0.2, 0.2))
    pvals["fluid n=4"] = joint_count_pvalue(fluid.FluidProblem(spec, 4).aux, rng, draws)
    toy = MultiAuxiliary(4.0, (1.0, 1.0), (TailDistribution.pareto(1.5), TailDistribution.pareto(2.0)),
                         [(2, 0), (1, 1), (0, 2)], (0.3, 0.25))
    pvals["multi d=2 n=4"] = joint_count_pvalue(toy, rng, draws)
    return pvals


def joint_count_pvalue(aux: MultiAuxiliary, rng, draws: int) -> float:
    d = len(aux.gammas)
    cells = [k for k in itertools.product(range(12), repeat=d) if in_union(k, aux.J)]
    exact = np.array([math.prod(stats.poisson.pmf(k[i], aux.means[i]) for i in range(d)) for k in cells])
    exact = np.append(exact, aux.prob - exact.sum()) / aux.prob
    index = {k: i for i, k in enumerate(cells)}
    observed = np.zeros(len(cells) + 1)
    for _ in range(draws):
        sizes, _, _ = aux.sample_sizes(rng)
        observed[index.get(tuple(aux.exceedance_counts(sizes)), len(cells))] += 1
    return pooled_chisquare(observed, exact * draws)


def test_criterion_8_sampler_exactness(criterion_log, network):
    pvals = small_instance_pvalues(network)
    iters = {app: max(r["mean_rejection_iters"] for r in grid_rows(app)) for app in ("ruin", "barrier", "fluid")}
    ok = all(p > 0.01 for p in pvals.values()) and all(v <= 5 for v in iters.values())
    detail = ", ".join(f"{k} p={v:.3f}" for k, v in pvals.items())
    detail += "; max mean iterations " + ", ".join(f"{k} {v:.2f}" for k, v in iters.items())
    criterion_log(8, ok, detail)
    assert ok


def test_criterion_9_skorokhod_suite(criterion_log):
    rng = np.random.default_rng(9)
    h = 1e-4
    worst = 0.0
    invariants = True
    monotone = True
    probe = np.linspace(0, 1, 101)
    for _ in range(100):
        d = int(rng.integers(1, 5))
        net = random_network(rng, d)
        sk = random_skeleton(rng, d)
        t, x = sample_on_grid(sk, np.zeros(d), h)
        w, z = reflect_discrete_oracle(net, x, tol=1e-10)
        path = reflect(net, sk)
        worst = max(worst, np.max(np.abs(at_times(path, "Z", t) - z)), np.max(np.abs(at_times(path, "Y", t) - w)))
        jumps_at = np.flatnonzero(np.diff(path.epochs) == 0)
        invariants &= bool(
            np.all(path.Z >= -1e-12)
            and np.all(np.diff(path.Y, axis=0) >= -1e-12)
            and np.allclose(path.Z, path.X + path.Y - path.Y @ net.Q, rtol=0, atol=1e-10)
            and all(np.allclose(path.Z[k + 1] - path.Z[k], path.X[k + 1] - path.X[k], rtol=0, atol=1e-12)
                    for k in jumps_at)
        )
        jumps = [(tt, i, s) for i in range(d) for tt, s in zip(sk.epochs[i], sk.sizes[i])]
        extra = jumps + [(float(rng.uniform(0, 1)), int(rng.integers(d)), float(rng.uniform(0.1, 1)))]
        bigger = reflect(net, skeleton(sk.drift, extra, d))
        monotone &= bool(
            np.all(at_times(bigger, "Y", probe) <= at_times(path, "Y", probe) + 1e-12)
            and np.all(at_times(bigger, "Z", probe) >= at_times(path, "Z", probe) - 1e-12)
        )
    ok = worst <= 10 * h and invariants and monotone
    criterion_log(9, ok, f"max oracle gap {worst / h:.2f} h, invariants {invariants}, monotonicity {monotone}")
    assert ok


def test_criterion_10_lattice_suite(criterion_log):
    rng = np.random.default_rng(10)
    figure = enumerate_J((2, 2), (1.0, 2.0))
    ok = sorted(figure) == sorted([(2, 2), (0, 4), (1, 3), (5, 1), (7, 0)])
    for _ in range(100):
        d = int(rng.integers(1, 4))
        w = tuple(float(x) for x in rng.uniform(0.5, 2.0, size=d))
        l_star = tuple(int(x) for x in rng.integers(0, 3, size=d))
        bound = max(enumeration_bounds(l_star, w)) + 2
        got = enumerate_J(l_star, w)
        ok &= got == sorted(brute_force_J(l_star, w, bound)) == definition_J(l_star, w, bound)
    criterion_log(10, ok, f"Figure-1 set {sorted(figure)}; 100 random cases checked")
    assert ok

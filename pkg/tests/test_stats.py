"""Statistics primitives against independent oracles."""
import itertools
import math

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from emochurn import stats
from emochurn.errors import DivergentEstimateError, InsufficientDataError, UndefinedTestError


def binom_pmf(k, n, p):
    return math.comb(n, k) * p ** k * (1 - p) ** (n - k)


def exact_binom_two_sided(k, n, p):
    # sum of outcomes no more likely than the observed one
    pk = binom_pmf(k, n, p)
    return min(1.0, sum(binom_pmf(i, n, p) for i in range(n + 1) if binom_pmf(i, n, p) <= pk * (1 + 1e-7)))


def test_one_proportion_equal_to_expected():
    r = stats.one_proportion_test(28, 100, 0.28)
    assert r.p_value == pytest.approx(1.0)
    assert r.estimate == pytest.approx(0.0)


def test_one_proportion_far_tail():
    r = stats.one_proportion_test(60, 100, 0.28, "greater")
    assert r.p_value < 1e-6
    assert sum(binom_pmf(i, 100, 0.28) for i in range(60, 101)) < 1e-6


def test_one_proportion_small_sample_exact():
    r = stats.one_proportion_test(3, 4, 0.28, "greater")
    assert r.method == "exact-binomial"
    assert r.p_value == pytest.approx(binom_pmf(3, 4, 0.28) + binom_pmf(4, 4, 0.28), abs=1e-12)


def test_one_proportion_yates_large_sample():
    # hand-computed: dev = 40 - 28 = 12, chi2 = 11.5^2 / (100*.28*.72)
    r = stats.one_proportion_test(400, 1000, 0.28, "two_sided")
    chi2 = (abs(400 - 280) - 0.5) ** 2 / (1000 * 0.28 * 0.72)
    assert r.method == "chi2-yates"
    assert r.statistic == pytest.approx(chi2)


@pytest.mark.parametrize("p0", [0.16, 0.28, 0.56])
def test_one_proportion_matches_exact_oracle(p0):
    for n in range(1, 51):
        for k in range(n + 1):
            ours = stats.one_proportion_test(k, n, p0).p_value
            ref = exact_binom_two_sided(k, n, p0)
            if abs(ref - 0.05) < 0.01:
                continue
            assert (ours < 0.05) == (ref < 0.05), (k, n, p0, ours, ref)


def test_one_proportion_zero_trials():
    with pytest.raises(UndefinedTestError):
        stats.one_proportion_test(0, 0, 0.3)


def test_two_proportion_identical():
    r = stats.two_proportion_test(30, 100, 30, 100)
    assert r.estimate == 0
    assert r.p_value == pytest.approx(1.0)


def test_two_proportion_strong_difference():
    r = stats.two_proportion_test(200, 1000, 100, 1000, "greater")
    assert r.p_value < 1e-8
    assert r.estimate == pytest.approx(0.1)


@pytest.mark.parametrize("k1,n1,k2,n2", [(200, 1000, 100, 1000), (13, 40, 22, 45), (5, 30, 9, 31), (70, 90, 50, 100)])
def test_two_proportion_vs_contingency(k1, n1, k2, n2):
    table = [[k1, n1 - k1], [k2, n2 - k2]]
    chi2, p, _, _ = chi2_contingency(table, correction=True)
    r = stats.two_proportion_test(k1, n1, k2, n2)
    assert r.statistic == pytest.approx(chi2, rel=1e-9)
    assert r.p_value == pytest.approx(p, rel=1e-9)


def test_two_proportion_one_sided_halves():
    two = stats.two_proportion_test(60, 200, 40, 200).p_value
    gt = stats.two_proportion_test(60, 200, 40, 200, "greater").p_value
    lt = stats.two_proportion_test(60, 200, 40, 200, "less").p_value
    assert gt == pytest.approx(two / 2)
    assert gt + lt >= 1 - two


def test_two_proportion_empty():
    with pytest.raises(UndefinedTestError):
        stats.two_proportion_test(0, 0, 1, 2)


def brute_ranksum_p(a, b):
    pooled = list(a) + list(b)
    n_a = len(a)

    def u_of(idx):
        xs = [pooled[i] for i in idx]
        ys = [pooled[i] for i in range(len(pooled)) if i not in idx]
        return sum((x > y) + 0.5 * (x == y) for x in xs for y in ys)

    u_obs = u_of(tuple(range(n_a)))
    centre = n_a * len(b) / 2
    us = [u_of(c) for c in itertools.combinations(range(len(pooled)), n_a)]
    return sum(abs(u - centre) >= abs(u_obs - centre) - 1e-9 for u in us) / len(us)


def test_ranksum_two_by_two_exact():
    r = stats.wilcoxon_rank_sum([1, 2], [3, 4])
    assert r.method == "exact"
    assert r.p_value == pytest.approx(1 / 3)


def test_ranksum_identical_is_one():
    assert stats.wilcoxon_rank_sum([1, 2, 3], [1, 2, 3]).p_value == pytest.approx(1.0)


def test_ranksum_exact_vs_bruteforce():
    rng = np.random.default_rng(3)
    for _ in range(30):
        na, nb = rng.integers(1, 7), rng.integers(1, 6)
        a = rng.integers(0, 6, na).astype(float)
        b = rng.integers(0, 6, nb).astype(float)
        assert stats.wilcoxon_rank_sum(a, b).p_value == pytest.approx(brute_ranksum_p(a, b), abs=1e-12)


def test_ranksum_separated_large():
    a = np.random.default_rng(0).random(1000)
    r = stats.wilcoxon_rank_sum(a, a + 10)
    assert r.p_value < 1e-15
    assert r.estimate == 0.0


def test_ranksum_swap_symmetry():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=40), rng.normal(0.3, size=50)
    assert stats.wilcoxon_rank_sum(a, b).p_value == pytest.approx(stats.wilcoxon_rank_sum(b, a).p_value)


def test_ranksum_empty():
    with pytest.raises(UndefinedTestError):
        stats.wilcoxon_rank_sum([], [1.0])


def direct_kde(samples, bw, grid):
    vals = np.array([sum(math.exp(-0.5 * ((g - s) / bw) ** 2) / (bw * math.sqrt(2 * math.pi))
                         for s in samples) / len(samples) for g in grid])
    return vals / np.trapezoid(vals, grid) if hasattr(np, "trapezoid") else vals / np.trapz(vals, grid)


def test_kde_vs_direct_sum():
    rng = np.random.default_rng(5)
    s = rng.uniform(1, 5, 5)
    d = stats.gaussian_kde(s, 0.35)
    assert np.max(np.abs(d.values - direct_kde(s, 0.35, d.grid))) < 1e-10
    assert d.integral() == pytest.approx(1.0, abs=1e-6)


def test_kde_single_sample_peak():
    d = stats.gaussian_kde([3.0], 0.35)
    assert d.argmax() == pytest.approx(3.0, abs=0.006)


def test_kde_linearity():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(1, 5, 7), rng.uniform(1, 5, 11)
    grid = stats.make_grid(1, 5, 0.01)
    joint = stats.gaussian_kernel_sum(np.concatenate([a, b]), 0.35, grid)
    parts = stats.gaussian_kernel_sum(a, 0.35, grid) + stats.gaussian_kernel_sum(b, 0.35, grid)
    assert np.max(np.abs(joint - parts)) < 1e-9


def test_kde_empty():
    with pytest.raises(UndefinedTestError):
        stats.gaussian_kde([])


def pareto(n, alpha, xmin=1.0, seed=0):
    u = np.random.default_rng(seed).random(n)
    return xmin * (1 - u) ** (-1 / (alpha - 1))


def test_powerlaw_recovery():
    alpha, n = stats.powerlaw_mle(pareto(100_000, 2.5), 1.0)
    assert n == 100_000
    assert abs(alpha - 2.5) < 0.05


def test_powerlaw_closed_form_two_points():
    assert stats.powerlaw_mle([1.0, math.e], 1.0, min_count=2) == (pytest.approx(3.0), 2)
    with pytest.raises(InsufficientDataError):
        stats.powerlaw_mle([1.0, math.e], 1.0)


def test_powerlaw_divergent():
    with pytest.raises(DivergentEstimateError):
        stats.powerlaw_mle([2.0] * 20, 2.0)


def test_powerlaw_scale_equivariance():
    x = pareto(5000, 2.2, seed=4)
    assert stats.powerlaw_mle(x * 7.5, 7.5)[0] == pytest.approx(stats.powerlaw_mle(x, 1.0)[0], rel=1e-12)


def test_truncated_powerlaw_recovery():
    # inverse-CDF sampling of a power law truncated to [1, 30]
    a, lo, hi = 1.8, 1.0, 30.0
    u = np.random.default_rng(9).random(50_000)
    b = 1 - a
    x = (lo ** b + u * (hi ** b - lo ** b)) ** (1 / b)
    assert stats.powerlaw_mle(x, lo, xmax=hi)[0] == pytest.approx(a, abs=0.03)


def test_histogram_decades():
    h = stats.log_binned_histogram([1, 10, 100], 1)
    assert h.counts.tolist() == [1, 1, 1]


def test_histogram_conservation_and_slope():
    x = pareto(200_000, 2.5, seed=7)
    h = stats.log_binned_histogram(x, 5)
    assert h.counts.sum() == x.size
    keep = h.counts >= 50
    slope = np.polyfit(np.log(h.centers[keep]), np.log(h.densities[keep]), 1)[0]
    assert abs(slope + 2.5) < 0.2


def test_bootstrap_constant_and_determinism():
    data = np.arange(50)
    assert stats.bootstrap_metric(data, lambda s: 3.0, reps=5)[1] == 0
    assert stats.bootstrap_metric(data, np.mean, 20, 11) == stats.bootstrap_metric(data, np.mean, 20, 11)


def test_bootstrap_binomial_standard_error():
    data = np.random.default_rng(0).integers(0, 2, 10_000)
    _, sd = stats.bootstrap_metric(data, np.mean, reps=200, seed=1)
    assert sd == pytest.approx(0.005, rel=0.3)


def test_wilson_closed_form():
    lo, hi = stats.wilson_interval(1, 2)
    z = 1.959963984540054
    centre = (0.5 + z * z / 4) / (1 + z * z / 2)
    half = z * math.sqrt(0.25 / 2 + z * z / 16) / (1 + z * z / 2)
    assert (lo, hi) == (pytest.approx(centre - half), pytest.approx(centre + half))
    assert lo == pytest.approx(0.095, abs=1e-3) and hi == pytest.approx(0.905, abs=1e-3)

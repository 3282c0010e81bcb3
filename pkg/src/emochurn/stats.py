"""Statistical primitives: proportion tests, rank-sum test, Gaussian KDE,
power-law MLE, log-binned histograms, bootstrap and Wilson intervals.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize
from scipy import stats as sps

from .errors import (
    ContractError,
    DivergentEstimateError,
    InsufficientDataError,
    UndefinedTestError,
)

ALTERNATIVES = ("two_sided", "greater", "less")

# below this many trials the one-sample test is always exact
EXACT_BINOMIAL_MAX_TRIALS = 50
# enumeration limit for the exact rank-sum path
EXACT_RANKSUM_MAX = 12

_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    alternative: str
    estimate: float
    method: str = ""

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ContractError(f"p_value {self.p_value} outside [0, 1]")
        if not math.isfinite(self.estimate):
            raise ContractError("estimate must be finite")

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alternative": self.alternative,
            "estimate": self.estimate,
            "method": self.method,
        }


@dataclass(frozen=True)
class Density:
    grid: np.ndarray
    values: np.ndarray

    def integral(self) -> float:
        return float(_trapz(self.values, self.grid))

    def argmax(self) -> float:
        return float(self.grid[int(np.argmax(self.values))])

    def __call__(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        """Geometric bin centres (appropriate for log-spaced edges)."""
        return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)


def _check_alternative(alternative):
    if alternative not in ALTERNATIVES:
        raise ContractError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


def _clip01(p):
    return float(min(1.0, max(0.0, p)))


def _directional_p(z, alternative):
    if alternative == "greater":
        return float(sps.norm.sf(z))
    if alternative == "less":
        return float(sps.norm.cdf(z))
    return _clip01(2.0 * sps.norm.sf(abs(z)))


def one_proportion_test(successes, trials, p0, alternative="two_sided",
                        exact_max_trials=EXACT_BINOMIAL_MAX_TRIALS):
    """Chi-square test of ``successes/trials`` against ``p0``.

    Uses the Yates-corrected statistic (correction capped at the absolute
    deviation, so an exact match yields p = 1). The exact binomial test is
    used instead when either expected count is below 5 or when
    ``trials <= exact_max_trials``; at those sizes the continuity-corrected
    approximation flips decisions well away from the 0.05 boundary.
    """
    _check_alternative(alternative)
    if trials == 0:
        raise UndefinedTestError("one-proportion test with zero trials")
    if not 0 <= successes <= trials:
        raise ContractError(f"successes={successes} outside [0, {trials}]")
    if not 0.0 < p0 < 1.0:
        raise ContractError(f"p0={p0} outside (0, 1)")

    estimate = successes / trials - p0
    expected = trials * p0
    if expected < 5 or trials - expected < 5 or trials <= exact_max_trials:
        res = sps.binomtest(int(successes), int(trials), p0,
                            alternative=alternative.replace("_", "-"))
        return TestResult(float(successes), _clip01(res.pvalue), alternative, estimate,
                          "exact-binomial")

    dev = successes - expected
    yates = min(0.5, abs(dev))
    chi2 = (abs(dev) - yates) ** 2 / (trials * p0 * (1.0 - p0))
    if alternative == "two_sided":
        p = float(sps.chi2.sf(chi2, 1))
    else:
        p = _directional_p(math.copysign(math.sqrt(chi2), dev), alternative)
    return TestResult(chi2, _clip01(p), alternative, estimate, "chi2-yates")


def two_proportion_test(k1, n1, k2, n2, alternative="two_sided"):
    """Pooled chi-square test (Yates-corrected) for equal proportions.

    ``greater`` tests k1/n1 > k2/n2. The reported estimate is the absolute
    difference of the two proportions.
    """
    _check_alternative(alternative)
    if n1 == 0 or n2 == 0:
        raise UndefinedTestError("two-proportion test with an empty sample")
    if not (0 <= k1 <= n1 and 0 <= k2 <= n2):
        raise ContractError("successes must lie within [0, trials]")

    p1, p2 = k1 / n1, k2 / n2
    delta = p1 - p2
    pooled = (k1 + k2) / (n1 + n2)
    estimate = abs(delta)
    inv = 1.0 / n1 + 1.0 / n2
    if pooled in (0.0, 1.0):
        return TestResult(0.0, 1.0, alternative, estimate, "chi2-yates")
    yates = min(0.5, abs(delta) / inv)
    z_abs = max(abs(delta) - yates * inv, 0.0) / math.sqrt(pooled * (1 - pooled) * inv)
    chi2 = z_abs ** 2
    if alternative == "two_sided":
        p = float(sps.chi2.sf(chi2, 1))
    else:
        p = _directional_p(math.copysign(z_abs, delta), alternative)
    return TestResult(chi2, _clip01(p), alternative, estimate, "chi2-yates")


def _ranksum_exact(ranks, n_a, w_obs, alternative):
    n = len(ranks)
    mean = n_a * (n + 1) / 2.0
    sums = np.fromiter(
        (sum(c) for c in itertools.combinations(ranks, n_a)), dtype=float
    )
    tol = 1e-9
    if alternative == "greater":
        hits = sums >= w_obs - tol
    elif alternative == "less":
        hits = sums <= w_obs + tol
    else:
        hits = np.abs(sums - mean) >= abs(w_obs - mean) - tol
    return float(hits.mean())


def wilcoxon_rank_sum(a, b, alternative="two_sided"):
    """Wilcoxon rank-sum (Mann-Whitney) test.

    Exact enumeration over all rank assignments when ``len(a) + len(b) <= 12``
    (mid-ranks for ties), otherwise a tie-corrected normal approximation with
    continuity correction. ``statistic`` is U for ``a``; ``estimate`` is
    U / (len(a) * len(b)), the probability that a value of ``a`` exceeds one of
    ``b`` (ties counting one half). ``greater`` means ``a`` tends to be larger.
    """
    _check_alternative(alternative)
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise UndefinedTestError("rank-sum test needs both samples non-empty")
    n_a, n_b = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = sps.rankdata(pooled)
    w = float(ranks[:n_a].sum())
    u = w - n_a * (n_a + 1) / 2.0
    estimate = u / (n_a * n_b)

    if n_a + n_b <= EXACT_RANKSUM_MAX:
        p = _ranksum_exact(tuple(ranks), n_a, w, alternative)
        return TestResult(u, _clip01(p), alternative, estimate, "exact")

    n = n_a + n_b
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return TestResult(u, 1.0, alternative, estimate, "normal")
    mean = n_a * n_b / 2.0
    d = u - mean
    sd = math.sqrt(var)
    if alternative == "greater":
        p = float(sps.norm.sf((d - 0.5) / sd))
    elif alternative == "less":
        p = float(sps.norm.cdf((d + 0.5) / sd))
    else:
        z = max(abs(d) - 0.5, 0.0) / sd
        p = 2.0 * float(sps.norm.sf(z))
    return TestResult(u, _clip01(p), alternative, estimate, "normal")


def make_grid(lo, hi, step):
    if not lo < hi:
        raise ContractError("grid needs lo < hi")
    if step <= 0:
        raise ContractError("grid step must be positive")
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n, dtype=float)


def gaussian_kernel_sum(samples, bandwidth, grid, chunk=4096):
    """Unnormalized sum of one Gaussian pdf (sigma = bandwidth) per sample."""
    samples = np.asarray(samples, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float)
    out = np.zeros_like(grid)
    norm = 1.0 / (bandwidth * math.sqrt(2.0 * math.pi))
    for start in range(0, samples.size, chunk):
        block = samples[start:start + chunk]
        z = (grid[None, :] - block[:, None]) / bandwidth
        out += norm * np.exp(-0.5 * z * z).sum(axis=0)
    return out


def gaussian_kde(samples, bandwidth=0.35, grid=(1.0, 5.0, 0.01)):
    """Fixed-bandwidth Gaussian KDE renormalized to unit area over ``grid``.

    ``grid`` is ``(lo, hi, step)``.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise UndefinedTestError("KDE of an empty sample")
    if bandwidth <= 0:
        raise ContractError("bandwidth must be positive")
    x = make_grid(*grid)
    raw = gaussian_kernel_sum(samples, bandwidth, x) / samples.size
    area = float(_trapz(raw, x))
    if not area > 0:
        raise UndefinedTestError("all samples too far from the grid; density vanishes")
    return Density(x, raw / area)


def _truncated_exponent(mean_log, span):
    # solves 1/b - L/(exp(bL) - 1) = mean_log for b (= alpha - 1)
    def h(beta):
        bl = beta * span
        if abs(bl) < 1e-6:
            return span / 2.0 - beta * span * span / 12.0 - mean_log
        return 1.0 / beta - span / math.expm1(bl) - mean_log

    lo, hi = -1.0 / span, 1.0 / span
    while h(lo) < 0:
        lo *= 2.0
    while h(hi) > 0:
        hi *= 2.0
    return optimize.brentq(h, lo, hi, xtol=1e-14, rtol=1e-14)


def powerlaw_mle(samples, xmin, xmax=None, min_count=10):
    """Continuous power-law exponent by maximum likelihood.

    Returns ``(alpha, n_used)``. Without ``xmax`` this is the closed form
    ``1 + n / sum(ln(x / xmin))`` over samples >= xmin. With ``xmax`` the fit
    uses samples in [xmin, xmax] under a doubly truncated power law, solved
    numerically.
    """
    if xmin <= 0:
        raise ContractError("xmin must be positive")
    x = np.asarray(samples, dtype=float).ravel()
    mask = x >= xmin
    if xmax is not None:
        if xmax <= xmin:
            raise ContractError("xmax must exceed xmin")
        mask &= x <= xmax
    used = x[mask]
    n = int(used.size)
    if n == 0:
        raise InsufficientDataError("no samples at or above xmin")
    logs = np.log(used / xmin)
    total = float(logs.sum())
    if total <= 0.0:
        raise DivergentEstimateError("all samples equal xmin; exponent diverges")
    if n < min_count:
        raise InsufficientDataError(f"{n} samples >= xmin, need at least {min_count}")
    if xmax is None:
        return 1.0 + n / total, n
    span = math.log(xmax / xmin)
    return 1.0 + _truncated_exponent(total / n, span), n


def log_binned_histogram(samples, bins_per_decade=10):
    """Histogram with geometric edges starting at min(samples).

    Bins are half-open ``[lo, hi)``; edges are added until one exceeds the
    sample maximum.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise UndefinedTestError("histogram of an empty sample")
    if bins_per_decade < 1:
        raise ContractError("bins_per_decade must be >= 1")
    if np.any(x <= 0):
        raise ContractError("log-binned histogram needs strictly positive samples")
    lo, hi = float(x.min()), float(x.max())
    k = max(1, int(math.ceil(math.log10(hi / lo) * bins_per_decade)))
    edges = lo * 10.0 ** (np.arange(k + 1) / bins_per_decade)
    while edges[-1] <= hi:
        edges = np.append(edges, lo * 10.0 ** (edges.size / bins_per_decade))
    idx = np.searchsorted(edges, x, side="right") - 1
    idx = np.clip(idx, 0, edges.size - 2)
    counts = np.bincount(idx, minlength=edges.size - 1)
    densities = counts / (np.diff(edges) * x.size)
    return Histogram(edges, counts, densities)


def bootstrap_indices(n, reps, seed):
    """Index arrays for ``reps`` resamples; replicate ``i`` uses seed + i."""
    for i in range(reps):
        rng = np.random.default_rng(seed + i)
        yield rng.integers(0, n, size=n)


def bootstrap_metric(data, metric: Callable, reps=20, seed=0):
    """Mean and sample std of ``metric`` over bootstrap resamples of ``data``."""
    n = len(data)
    if n < 1:
        raise ContractError("bootstrap needs at least one record")
    if reps < 2:
        raise ContractError("bootstrap needs reps >= 2")
    arr = data if isinstance(data, np.ndarray) else None
    values = []
    for idx in bootstrap_indices(n, reps, seed):
        sample = arr[idx] if arr is not None else [data[j] for j in idx]
        values.append(float(metric(sample)))
    values = np.asarray(values)
    return float(values.mean()), float(values.std(ddof=1))


def wilson_interval(successes, trials, confidence=0.95):
    """Wilson score interval ``(lo, hi)`` for a binomial proportion."""
    if trials <= 0:
        raise UndefinedTestError("Wilson interval with zero trials")
    z = float(sps.norm.ppf(0.5 + confidence / 2.0))
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    # the bounds are exactly 0 and 1 at the extremes; rounding can miss them
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi

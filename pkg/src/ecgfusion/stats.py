"""Bootstrap confidence intervals, pairwise significance, learning curves.

Bootstrapping deliberately matches the evaluation protocol this project
standardises on: each iteration permutes the test set and keeps 80% of it
(subsampling without replacement), the metric is recomputed, and the
percentile interval of the resulting distribution is reported. Pairs of
experiments are compared with an unpaired two-sample t-test at p < 0.01.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as spstats

from .metrics import MetricValue

SIGNIFICANCE_ALPHA = 0.01
COMPARISON_PAIRS = ("FE vs DL", "FE vs FE+DL", "DL vs FE+DL")


@dataclass(frozen=True)
class BootstrapResult:
    values: np.ndarray
    mean: float
    ci_low: float
    ci_high: float
    seed: int
    n_failed_attempts: int = 0

    def validate(self) -> None:
        slack = 1e-12 * max(1.0, abs(self.mean))
        if not (self.ci_low - slack <= self.mean <= self.ci_high + slack):
            raise ValueError("CI must bracket the mean")


@dataclass(frozen=True)
class SignificanceReport:
    pair: str
    t_statistic: float
    p_value: float
    significant: bool

    def __post_init__(self) -> None:
        if self.significant != (self.p_value < SIGNIFICANCE_ALPHA):
            raise ValueError("significance flag must equal p < 0.01")


def bootstrap(metric_fn: Callable[[np.ndarray, np.ndarray], float],
              scores: np.ndarray, labels: np.ndarray,
              iters: int = 1000, frac: float = 0.8, seed: int = 0) -> BootstrapResult:
    """``iters`` metric values on 80% without-replacement subsamples.

    Iterations where the metric is undefined (e.g. a single-class subsample)
    are resampled and counted; more than 10% failures aborts with a
    diagnostic rather than silently biasing the distribution.
    """
    s = np.asarray(scores)
    y = np.asarray(labels)
    n = s.shape[0]
    k = max(1, int(round(frac * n)))
    rng = np.random.default_rng(seed)
    values: list[float] = []
    failures = 0
    while len(values) < iters:
        idx = rng.permutation(n)[:k]
        try:
            v = float(metric_fn(s[idx], y[idx]))
        except ValueError as exc:
            failures += 1
            attempts = failures + len(values)
            if attempts >= 50 and failures > 0.10 * attempts:
                raise RuntimeError(
                    f"bootstrap: metric undefined on {failures}/{attempts} "
                    f"attempts (last: {exc}); check class balance of the "
                    "test set or lower the subsample fraction") from exc
            continue
        values.append(v)
    arr = np.asarray(values)
    lo, hi = np.percentile(arr, [2.5, 97.5])
    result = BootstrapResult(values=arr, mean=float(arr.mean()),
                             ci_low=float(lo), ci_high=float(hi),
                             seed=seed, n_failed_attempts=failures)
    result.validate()
    return result


def compare(a: BootstrapResult, b: BootstrapResult,
            pair: str = "FE vs DL") -> SignificanceReport:
    """Unpaired two-sample Student's t-test over bootstrap distributions.

    Degenerate zero-variance inputs are resolved by the means: identical
    means give p = 1, different means give the p = 0 boundary.
    """
    if a.values.size != b.values.size:
        raise ValueError("bootstrap iteration counts differ")
    with warnings.catch_warnings():
        # identical/zero-variance inputs warn before returning nan; the nan
        # branch below resolves them deliberately
        warnings.simplefilter("ignore")
        t, p = spstats.ttest_ind(a.values, b.values, equal_var=True)
    t, p = float(t), float(p)
    if np.isnan(p):
        if np.isclose(a.mean, b.mean, rtol=0.0, atol=0.0):
            t, p = 0.0, 1.0
        else:
            t, p = float("inf") if a.mean > b.mean else float("-inf"), 0.0
    return SignificanceReport(pair=pair, t_statistic=t, p_value=p,
                              significant=p < SIGNIFICANCE_ALPHA)


# ---------------------------------------------------------------------------
# Learning curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    train_size: int
    experiment: str   # "FE" | "DL" | "FE+DL"
    metric: MetricValue | None
    seed: int
    clipped: bool = False
    failed: bool = False


def _stratified_subsample(items: Sequence[str], strata: Sequence[object],
                          size: int, rng: np.random.Generator) -> list[str]:
    groups: dict[object, list[str]] = {}
    for it, st in zip(items, strata):
        groups.setdefault(st, []).append(it)
    n = len(items)
    keys = sorted(groups, key=repr)
    exact = [size * len(groups[k]) / n for k in keys]
    counts = [int(np.floor(e)) for e in exact]
    short = size - sum(counts)
    order = sorted(range(len(keys)), key=lambda i: exact[i] - counts[i], reverse=True)
    for i in order[:short]:
        counts[i] += 1
    chosen: list[str] = []
    for k, c in zip(keys, counts):
        ids = sorted(groups[k])
        perm = rng.permutation(len(ids))[:c]
        chosen.extend(ids[i] for i in perm)
    return chosen


def learning_curve(pipeline_fn: Callable[[list[str], int], MetricValue],
                   train_items: Sequence[str], strata: Sequence[object],
                   sizes: Sequence[int], seeds: Sequence[int],
                   experiment: str) -> list[CurvePoint]:
    """One CurvePoint per (size, seed); failures are recorded, not raised.

    Hyperparameters are the pipeline's own business and are expected to be
    held fixed across sizes; this function only varies the training subset.
    """
    points: list[CurvePoint] = []
    n = len(train_items)
    for size in sizes:
        clipped = size > n
        eff = min(size, n)
        for seed in seeds:
            rng = np.random.default_rng(seed)
            subset = (list(train_items) if eff == n
                      else _stratified_subsample(train_items, strata, eff, rng))
            try:
                metric = pipeline_fn(subset, seed)
                points.append(CurvePoint(train_size=eff, experiment=experiment,
                                         metric=metric, seed=seed, clipped=clipped))
            except Exception:
                points.append(CurvePoint(train_size=eff, experiment=experiment,
                                         metric=None, seed=seed, clipped=clipped,
                                         failed=True))
    return points

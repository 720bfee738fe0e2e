"""Sequential model-based hyperparameter search.

Random warm-up followed by surrogate-guided proposals: a small forest
regressor (this package's own) models the score surface over encoded
configurations, and the next evaluation maximizes expected improvement over
a candidate pool of fresh random draws plus local mutations of the
incumbent. Failed objective evaluations are recorded and skipped by the
surrogate; the search never proposes out-of-bounds values and is
deterministic under its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forest import ForestConfig, fit_forest, predict_tree_values


@dataclass(frozen=True)
class Dimension:
    """One search dimension: integer/float range (optionally log-scaled) or
    categorical choices."""

    name: str
    kind: str                       # "int" | "float" | "cat"
    low: float | None = None
    high: float | None = None
    log: bool = False
    choices: tuple | None = None

    def validate(self) -> None:
        if self.kind in ("int", "float"):
            if self.low is None or self.high is None or self.low > self.high:
                raise ValueError(f"{self.name}: bad range")
            if self.log and self.low <= 0:
                raise ValueError(f"{self.name}: log scale needs positive bounds")
        elif self.kind == "cat":
            if not self.choices:
                raise ValueError(f"{self.name}: categorical needs choices")
        else:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")

    def sample(self, rng: np.random.Generator):
        if self.kind == "cat":
            return self.choices[int(rng.integers(0, len(self.choices)))]
        if self.log:
            v = 10 ** rng.uniform(math.log10(self.low), math.log10(self.high))
        else:
            v = rng.uniform(self.low, self.high)
        return int(round(v)) if self.kind == "int" else float(v)

    def clip(self, v):
        if self.kind == "cat":
            return v
        v = min(max(v, self.low), self.high)
        return int(round(v)) if self.kind == "int" else float(v)

    def mutate(self, v, rng: np.random.Generator):
        if self.kind == "cat":
            others = [c for c in self.choices if c != v]
            return others[int(rng.integers(0, len(others)))] if others else v
        if self.log:
            span = math.log10(self.high) - math.log10(self.low)
            step = rng.choice([-0.05, -0.01, 0.01, 0.05]) * span
            return self.clip(10 ** (math.log10(max(v, self.low)) + step))
        span = self.high - self.low
        if self.kind == "int":
            step = int(rng.choice([-1, 1])) * int(rng.choice(
                [1, max(1, round(0.05 * span))]))
            return self.clip(v + step)
        return self.clip(v + rng.normal(0.0, 0.1 * span))

    def encode(self, v) -> float:
        if self.kind == "cat":
            return float(self.choices.index(v))
        return math.log10(v) if self.log else float(v)


@dataclass
class TraceEntry:
    config: dict
    score: float | None
    failed: bool = False


@dataclass
class SearchTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    best_config: dict | None = None
    best_score: float | None = None
    budget: int = 0

    def validate(self) -> None:
        if len(self.entries) > self.budget:
            raise ValueError("trace longer than budget")
        scores = [e.score for e in self.entries if not e.failed]
        if scores and self.best_score != max(scores):
            raise ValueError("best_score must be the max over the trace")

    def to_json(self) -> dict:
        return {
            "budget": self.budget,
            "best_config": self.best_config,
            "best_score": self.best_score,
            "entries": [{"config": e.config, "score": e.score, "failed": e.failed}
                        for e in self.entries],
        }


def _sample_config(space: list[Dimension], rng: np.random.Generator) -> dict:
    return {d.name: d.sample(rng) for d in space}


def _encode(space: list[Dimension], cfg: dict) -> tuple:
    return tuple(d.encode(cfg[d.name]) for d in space)


def _expected_improvement(mu: np.ndarray, sigma: np.ndarray,
                          best: float) -> np.ndarray:
    """EI for maximization; zero-variance candidates fall back to the mean
    gap so the argmax is still informative."""
    gap = mu - best
    out = np.where(gap > 0, gap, 0.0).astype(float)
    pos = sigma > 1e-12
    if pos.any():
        z = gap[pos] / sigma[pos]
        cdf = 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))
        pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        out[pos] = gap[pos] * cdf + sigma[pos] * pdf
    return out


def tune(space: list[Dimension], objective, budget: int, seed: int = 0,
         n_warmup: int = 10, n_candidates: int = 64) -> SearchTrace:
    """Maximize ``objective(config) -> float`` within ``budget`` evaluations."""
    for d in space:
        d.validate()
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    trace = SearchTrace(budget=budget)
    seen: set[tuple] = set()

    def evaluate(cfg: dict) -> None:
        seen.add(_encode(space, cfg))
        try:
            score = float(objective(cfg))
            if not math.isfinite(score):
                raise ValueError("non-finite score")
        except Exception:
            trace.entries.append(TraceEntry(config=cfg, score=None, failed=True))
            return
        trace.entries.append(TraceEntry(config=cfg, score=score))
        if trace.best_score is None or score > trace.best_score:
            trace.best_score = score
            trace.best_config = cfg

    for i in range(budget):
        ok = [e for e in trace.entries if not e.failed]
        if i < n_warmup or len(ok) < 2:
            evaluate(_sample_config(space, rng))
            continue

        X = np.asarray([_encode(space, e.config) for e in ok])
        y = np.asarray([e.score for e in ok])
        surrogate = fit_forest(X, y, ForestConfig(
            n_trees=25, split_criterion="squared_error",
            min_samples_leaf=1, seed=int(rng.integers(2 ** 31))))

        pool: list[dict] = [_sample_config(space, rng) for _ in range(n_candidates)]
        best_cfg = trace.best_config or ok[0].config
        for _ in range(16):
            mutant = dict(best_cfg)
            d = space[int(rng.integers(0, len(space)))]
            mutant[d.name] = d.mutate(mutant[d.name], rng)
            pool.append(mutant)
        fresh = [c for c in pool if _encode(space, c) not in seen]
        if not fresh:
            evaluate(_sample_config(space, rng))
            continue
        enc = np.asarray([_encode(space, c) for c in fresh])
        per_tree = predict_tree_values(surrogate, enc)
        mu = per_tree.mean(axis=0)
        sigma = per_tree.std(axis=0)
        ei = _expected_improvement(mu, sigma, float(trace.best_score))
        evaluate(fresh[int(np.argmax(ei))])

    trace.validate()
    return trace

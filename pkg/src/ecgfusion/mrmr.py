"""Minimum-redundancy-maximum-relevance ranking and multilabel union
selection.

The estimator is deliberately plain and fully documented: mutual
information on equal-frequency-discretized values (min(16, ceil(sqrt(n)))
bins per feature; binary targets as-is; continuous targets in deciles),
combined with the classic greedy difference rule

    score(f) = MI(f, y) - mean_{s in S} MI(f, s)

with ties broken by ascending column index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matrix import FeatureMatrix

UNINFORMATIVE_SCORE = float("-inf")


def n_feature_bins(n_rows: int) -> int:
    return int(min(16, np.ceil(np.sqrt(n_rows))))


def quantile_codes(x: np.ndarray, n_bins: int) -> tuple[np.ndarray, int]:
    """Equal-frequency bin codes; duplicate quantile edges collapse bins."""
    if n_bins < 2:
        return np.zeros(x.size, dtype=np.int64), 1
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    edges = np.unique(np.quantile(x, qs))
    codes = np.searchsorted(edges, x, side="right")
    return codes.astype(np.int64), int(edges.size) + 1


def mutual_information(a: np.ndarray, n_a: int, b: np.ndarray, n_b: int) -> float:
    """MI in nats from the joint contingency table of two code arrays."""
    n = a.size
    joint = np.bincount(a * n_b + b, minlength=n_a * n_b).astype(float)
    joint = joint.reshape(n_a, n_b) / n
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    nz = joint > 0
    outer = pa[:, None] * pb[None, :]
    return float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))


@dataclass
class FeatureRanking:
    """Greedy mRMR order for one target label.

    ``scores`` is the non-increasing presentation of the greedy trajectory
    (running minimum of the step scores), which keeps rank-k prefixes
    monotone; ``step_scores`` holds the raw greedy values for audit.
    Entirely-missing columns close the order with a -inf sentinel.
    """

    target_label: str
    ordered_features: list[str]
    scores: np.ndarray
    step_scores: np.ndarray
    greedy_depth: int
    uninformative: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if len(set(self.ordered_features)) != len(self.ordered_features):
            raise ValueError("ordered_features must be a permutation")
        finite = self.scores[np.isfinite(self.scores)]
        if np.any(np.diff(finite) > 1e-12):
            raise ValueError("scores must be non-increasing along the order")

    def top(self, k: int) -> list[str]:
        return self.ordered_features[:k]

    def to_json(self) -> dict:
        return {
            "target_label": self.target_label,
            "ordered_features": self.ordered_features,
            "scores": [None if not np.isfinite(s) else float(s) for s in self.scores],
            "step_scores": [None if not np.isfinite(s) else float(s)
                            for s in self.step_scores],
            "greedy_depth": self.greedy_depth,
            "uninformative": self.uninformative,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureRanking":
        def arr(values):
            return np.array([UNINFORMATIVE_SCORE if v is None else float(v)
                             for v in values])
        ranking = cls(
            target_label=obj["target_label"],
            ordered_features=list(obj["ordered_features"]),
            scores=arr(obj["scores"]),
            step_scores=arr(obj["step_scores"]),
            greedy_depth=int(obj["greedy_depth"]),
            uninformative=list(obj.get("uninformative", [])),
        )
        ranking.validate()
        return ranking


def rank_mrmr(matrix: FeatureMatrix, target: np.ndarray, target_label: str,
              target_kind: str = "binary", depth: int | None = None) -> FeatureRanking:
    """Greedy forward mRMR over the matrix's train rows.

    ``depth`` bounds the exact greedy loop; beyond it the remaining
    features are frozen in the order of their mRMR score at the cutoff
    (cheaper, and prefixes up to ``depth`` are unaffected).
    """
    tr = matrix.rows_for("train")
    X = matrix.values[tr]
    miss = matrix.missing[tr]
    y = np.asarray(target)
    if y.shape[0] != tr.size:
        raise ValueError("target must align with the train rows")
    n, p = X.shape
    if p < 1:
        raise ValueError("need at least one feature")

    if target_kind == "binary":
        y_codes = y.astype(np.int64)
        n_y = 2
        if np.unique(y_codes).size < 2:
            raise ValueError("constant target")
    elif target_kind == "continuous":
        if np.unique(y).size < 2:
            raise ValueError("constant target")
        y_codes, n_y = quantile_codes(y.astype(float), 10)
    else:
        raise ValueError(f"unknown target kind {target_kind!r}")

    nb = n_feature_bins(n)
    codes = np.empty((p, n), dtype=np.int64)
    sizes = np.empty(p, dtype=np.int64)
    dead = []
    for j in range(p):
        if miss[:, j].all():
            dead.append(j)
            codes[j], sizes[j] = np.zeros(n, dtype=np.int64), 1
        else:
            codes[j], sizes[j] = quantile_codes(X[:, j], nb)
    alive = [j for j in range(p) if j not in set(dead)]

    relevance = np.full(p, -np.inf)
    for j in alive:
        relevance[j] = mutual_information(codes[j], sizes[j], y_codes, n_y)

    depth = len(alive) if depth is None else min(depth, len(alive))
    selected: list[int] = []
    step_scores: list[float] = []
    remaining = list(alive)
    red_sum = np.zeros(p)
    current = relevance.copy()
    while remaining and len(selected) < depth:
        scores_now = current[remaining]
        best_pos = int(np.argmax(scores_now))   # first max = lowest index
        j = remaining.pop(best_pos)
        selected.append(j)
        step_scores.append(float(current[j]))
        for other in remaining:
            red_sum[other] += mutual_information(codes[other], sizes[other],
                                                 codes[j], sizes[j])
            current[other] = relevance[other] - red_sum[other] / len(selected)

    # Tail beyond the greedy depth: frozen at the cutoff score.
    tail = sorted(remaining, key=lambda j: (-current[j], j))
    order = selected + tail + dead
    raw = np.array(step_scores + [current[j] for j in tail]
                   + [UNINFORMATIVE_SCORE] * len(dead))
    mono = np.minimum.accumulate(raw)

    ranking = FeatureRanking(
        target_label=target_label,
        ordered_features=[matrix.column_ids[j] for j in order],
        scores=mono,
        step_scores=raw,
        greedy_depth=len(selected),
        uninformative=[matrix.column_ids[j] for j in dead],
    )
    ranking.validate()
    return ranking


@dataclass(frozen=True)
class UnionSelection:
    k_per_label: int
    per_label_top_k: dict[str, frozenset[str]]
    selected: frozenset[str]

    def validate(self) -> None:
        union: set[str] = set()
        for s in self.per_label_top_k.values():
            union |= s
        if union != set(self.selected):
            raise ValueError("selected must be the exact union of the top-k sets")
        if self.selected and len(self.selected) > self.k_per_label * len(self.per_label_top_k):
            raise ValueError("union larger than k * n_labels")

    def to_json(self) -> dict:
        return {
            "k_per_label": self.k_per_label,
            "per_label_top_k": {k: sorted(v) for k, v in self.per_label_top_k.items()},
            "selected": sorted(self.selected),
        }


def union_select(rankings: list[FeatureRanking], k: int) -> UnionSelection:
    """Top-k per label, then the exact set union (the multilabel rule)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    universe = set(rankings[0].ordered_features)
    for r in rankings[1:]:
        if set(r.ordered_features) != universe:
            raise ValueError("rankings cover different feature universes")
    per_label = {r.target_label: frozenset(r.top(min(k, len(r.ordered_features))))
                 for r in rankings}
    selected: set[str] = set()
    for s in per_label.values():
        selected |= s
    sel = UnionSelection(k_per_label=k, per_label_top_k=per_label,
                         selected=frozenset(selected))
    sel.validate()
    return sel


@dataclass(frozen=True)
class PlateauResult:
    k: int
    score: float
    plateau_found: bool


def plateau_pick(validation_scores: dict[int, float],
                 tol: float = 0.005) -> PlateauResult:
    """Smallest k whose score is within ``tol`` of the best score.

    When only the largest evaluated k qualifies there is no plateau; the
    largest k is returned flagged.
    """
    if not validation_scores:
        raise ValueError("no evaluated feature counts")
    ks = sorted(validation_scores)
    best = max(validation_scores.values())
    for k in ks:
        if validation_scores[k] >= best - tol:
            return PlateauResult(k=k, score=validation_scores[k],
                                 plateau_found=(k != ks[-1]) or len(ks) == 1)
    raise AssertionError("unreachable: the argmax always qualifies")

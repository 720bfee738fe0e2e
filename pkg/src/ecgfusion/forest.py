"""Random forest classifier/regressor built on binned histogram splits.

Trees are grown on bootstrap samples with sqrt(p) candidate features per
split for classification and p/3 for regression. Split quality uses
class-weighted Gini or entropy (classification) and squared error or a
histogram-approximated absolute error (regression). Candidate thresholds
come from per-feature binning: exact midpoints when a feature has at most
``max_bins`` distinct values, quantile edges otherwise.

Everything is deterministic under the config seed, and models serialize to
a portable JSON tree dump.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

CLS_CRITERIA = ("gini", "entropy")
REG_CRITERIA = ("squared_error", "absolute_error")


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None            # None: unlimited
    split_criterion: str = "gini"
    min_samples_leaf: int = 1
    n_features_selected: int | None = None  # bookkeeping: mRMR sweep value
    class_weights: dict | str | None = None  # per-class map | "balanced" | None
    seed: int = 0
    max_bins: int = 255

    def validate(self) -> None:
        if self.n_trees < 1 or self.min_samples_leaf < 1:
            raise ValueError("counts must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.split_criterion not in CLS_CRITERIA + REG_CRITERIA:
            raise ValueError(f"unknown criterion {self.split_criterion!r}")
        if isinstance(self.class_weights, dict):
            if any(w <= 0 for w in self.class_weights.values()):
                raise ValueError("class weights must be strictly positive")
        if not 2 <= self.max_bins <= 255:
            raise ValueError("max_bins must be in [2, 255]")

    @property
    def is_classification(self) -> bool:
        return self.split_criterion in CLS_CRITERIA


@dataclass
class Tree:
    feature: np.ndarray    # int, -1 at leaves
    threshold: np.ndarray  # float
    left: np.ndarray       # int child ids
    right: np.ndarray
    value: np.ndarray      # (n_nodes, K) distributions or (n_nodes, 1) means


@dataclass
class ForestModel:
    config: ForestConfig
    trees: list[Tree]
    n_features: int
    classes: np.ndarray | None          # None for regression
    class_weights_used: dict | None
    column_ids: list[str] | None = None

    @property
    def is_classification(self) -> bool:
        return self.classes is not None


def balanced_weights(y: np.ndarray) -> dict:
    """w_c = N / (K * n_c) over the classes present in y."""
    classes, counts = np.unique(y, return_counts=True)
    n, k = y.size, classes.size
    return {c.item(): n / (k * cnt) for c, cnt in zip(classes, counts)}


def _bin_feature(col: np.ndarray, max_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Returns (edges, codes): code b means col <= edges[b] fails for all
    smaller b, i.e. splitting 'code <= b' is exactly 'value <= edges[b]'."""
    uniq = np.unique(col)
    if uniq.size <= 1:
        return np.empty(0), np.zeros(col.size, dtype=np.uint8)
    if uniq.size <= max_bins:
        edges = (uniq[:-1] + uniq[1:]) / 2.0
    else:
        qs = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
        edges = np.unique(qs)
    codes = np.searchsorted(edges, col, side="right")
    return edges, codes.astype(np.uint8)


class _TreeBuilder:
    """Grows one tree on pre-binned data; vectorizes the histogram across
    the sampled features of a node."""

    def __init__(self, codes: np.ndarray, edges: list[np.ndarray],
                 y_enc: np.ndarray, weights: np.ndarray, config: ForestConfig,
                 n_classes: int, y_raw: np.ndarray):
        self.codes = codes          # (n, p) uint8
        self.edges = edges
        self.y = y_enc
        self.w = weights
        self.cfg = config
        self.k = n_classes          # 1 for regression
        self.y_raw = y_raw
        self.n_bins = max(int(e.size) + 1 for e in edges)
        self.p = codes.shape[1]
        if config.is_classification:
            self.mtry = max(1, int(round(np.sqrt(self.p))))
        else:
            self.mtry = max(1, int(round(self.p / 3.0)))

        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def _leaf_value(self, idx: np.ndarray) -> np.ndarray:
        if self.cfg.is_classification:
            dist = np.bincount(self.y[idx], weights=self.w[idx], minlength=self.k)
            total = dist.sum()
            return dist / total if total > 0 else np.full(self.k, 1.0 / self.k)
        wsum = self.w[idx].sum()
        return np.array([float(np.sum(self.y_raw[idx] * self.w[idx]) / wsum)])

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(np.empty(0))
        return len(self.feature) - 1

    def _node_pure(self, idx: np.ndarray) -> bool:
        if self.cfg.is_classification:
            return np.unique(self.y[idx]).size <= 1
        return bool(np.ptp(self.y_raw[idx]) == 0.0)

    def build(self, root_idx: np.ndarray, rng: np.random.Generator) -> Tree:
        root = self._new_node()
        stack = [(root, root_idx, 0)]
        while stack:
            node, idx, depth = stack.pop()
            self.value[node] = self._leaf_value(idx)
            if (idx.size < 2 * self.cfg.min_samples_leaf
                    or (self.cfg.max_depth is not None and depth >= self.cfg.max_depth)
                    or self._node_pure(idx)):
                continue
            feats = np.sort(rng.choice(self.p, size=min(self.mtry, self.p),
                                       replace=False))
            split = self._best_split(idx, feats)
            if split is None:
                continue
            f, b = split
            go_left = self.codes[idx, f] <= b
            left_idx, right_idx = idx[go_left], idx[~go_left]
            self.feature[node] = int(f)
            self.threshold[node] = float(self.edges[f][b])
            lid, rid = self._new_node(), self._new_node()
            self.left[node], self.right[node] = lid, rid
            stack.append((rid, right_idx, depth + 1))
            stack.append((lid, left_idx, depth + 1))
        return Tree(feature=np.asarray(self.feature, dtype=np.int32),
                    threshold=np.asarray(self.threshold),
                    left=np.asarray(self.left, dtype=np.int32),
                    right=np.asarray(self.right, dtype=np.int32),
                    value=np.stack(self.value))

    def _best_split(self, idx: np.ndarray, feats: np.ndarray) -> tuple[int, int] | None:
        nf = feats.size
        b_tot = self.n_bins
        sub = self.codes[np.ix_(idx, feats)].astype(np.int64)
        offsets = np.arange(nf, dtype=np.int64) * b_tot
        if self.cfg.is_classification:
            lin = (sub + offsets[None, :]) * self.k + self.y[idx, None]
            size = nf * b_tot * self.k
            w_rep = np.repeat(self.w[idx], nf)
            hist_w = np.bincount(lin.ravel(), weights=w_rep,
                                 minlength=size).reshape(nf, b_tot, self.k)
            hist_n = np.bincount(lin.ravel(),
                                 minlength=size).reshape(nf, b_tot, self.k)
            return self._score_classification(hist_w, hist_n.sum(axis=2), feats)
        lin = sub + offsets[None, :]
        size = nf * b_tot
        y_sub = self.y_raw[idx]
        cnt = np.bincount(lin.ravel(), minlength=size).reshape(nf, b_tot)
        s1 = np.bincount(lin.ravel(), weights=np.repeat(y_sub, nf).reshape(-1),
                         minlength=size).reshape(nf, b_tot)
        # np.repeat(y, nf) repeats elementwise; lin.ravel() is row-major, so
        # align weights the same way.
        s2 = np.bincount(lin.ravel(), weights=np.repeat(y_sub * y_sub, nf),
                         minlength=size).reshape(nf, b_tot)
        return self._score_regression(cnt, s1, s2, feats)

    def _admissible(self, cnt_left: np.ndarray, cnt_total: float) -> np.ndarray:
        min_leaf = self.cfg.min_samples_leaf
        cnt_right = cnt_total - cnt_left
        return (cnt_left >= min_leaf) & (cnt_right >= min_leaf)

    def _score_classification(self, hist_w, cnt_b, feats) -> tuple[int, int] | None:
        w_left = np.cumsum(hist_w, axis=1)          # (F, B, K)
        w_total = w_left[:, -1:, :]
        w_right = w_total - w_left
        n_left = np.cumsum(cnt_b, axis=1)
        valid = self._admissible(n_left, float(n_left[0, -1]))
        wl = w_left.sum(axis=2)
        wr = w_right.sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.cfg.split_criterion == "gini":
                il = 1.0 - np.sum((w_left / wl[..., None]) ** 2, axis=2)
                ir = 1.0 - np.sum((w_right / wr[..., None]) ** 2, axis=2)
                parent = 1.0 - float(np.sum((w_total[0, 0] / w_total[0, 0].sum()) ** 2))
            else:
                pl = w_left / wl[..., None]
                pr = w_right / wr[..., None]
                il = -np.sum(np.where(pl > 0, pl * np.log(pl), 0.0), axis=2)
                ir = -np.sum(np.where(pr > 0, pr * np.log(pr), 0.0), axis=2)
                pp = w_total[0, 0] / w_total[0, 0].sum()
                parent = float(-np.sum(np.where(pp > 0, pp * np.log(pp), 0.0)))
        il = np.where(wl > 0, il, 0.0)
        ir = np.where(wr > 0, ir, 0.0)
        score = wl * il + wr * ir
        parent_score = float(w_total[0, 0].sum()) * parent
        return self._pick(score, valid, parent_score, feats)

    def _score_regression(self, cnt, s1, s2, feats) -> tuple[int, int] | None:
        n_left = np.cumsum(cnt, axis=1)
        n_tot = float(n_left[0, -1])
        valid = self._admissible(n_left, n_tot)
        s1l = np.cumsum(s1, axis=1)
        s2l = np.cumsum(s2, axis=1)
        s1r = s1l[:, -1:] - s1l
        s2r = s2l[:, -1:] - s2l
        n_right = n_tot - n_left
        if self.cfg.split_criterion == "squared_error":
            with np.errstate(divide="ignore", invalid="ignore"):
                sse_l = s2l - np.where(n_left > 0, s1l ** 2 / n_left, 0.0)
                sse_r = s2r - np.where(n_right > 0, s1r ** 2 / n_right, 0.0)
            score = np.where(n_left > 0, sse_l, 0.0) + np.where(n_right > 0, sse_r, 0.0)
            parent_score = float(s2l[0, -1] - s1l[0, -1] ** 2 / n_tot)
        else:
            score = self._mae_scores(cnt, s1)
            parent_score = self._mae_parent(cnt, s1)
        return self._pick(score, valid, parent_score, feats)

    def _mae_parent(self, cnt, s1) -> float:
        c = cnt[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(c > 0, s1[0] / c, 0.0)
        order = np.argsort(means)
        cs = np.cumsum(c[order])
        med = means[order][np.searchsorted(cs, cs[-1] / 2.0)]
        return float(np.sum(c * np.abs(means - med)))

    def _mae_scores(self, cnt, s1) -> np.ndarray:
        """Histogram-approximated MAE: bin members sit at the bin mean."""
        nf, b_tot = cnt.shape
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(cnt > 0, s1 / cnt, 0.0)
        scores = np.full((nf, b_tot), np.inf)
        for fi in range(nf):
            c = cnt[fi]
            m = means[fi]
            cum = np.cumsum(c)
            total = cum[-1]
            for b in range(b_tot):
                nl = cum[b]
                if nl == 0 or nl == total:
                    continue
                lm = m[:b + 1]
                lc = c[:b + 1]
                rm = m[b + 1:]
                rc = c[b + 1:]
                med_l = _weighted_median(lm, lc)
                med_r = _weighted_median(rm, rc)
                scores[fi, b] = (np.sum(lc * np.abs(lm - med_l))
                                 + np.sum(rc * np.abs(rm - med_r)))
        return scores

    def _pick(self, score, valid, parent_score, feats) -> tuple[int, int] | None:
        score = np.where(valid, score, np.inf)
        # Features with no edges produce no admissible bins automatically
        # because their single code is 0 and the right side is empty.
        flat = int(np.argmin(score))
        fi, b = divmod(flat, score.shape[1])
        best = float(score[fi, b])
        if not np.isfinite(best) or best >= parent_score - 1e-12:
            return None
        f = int(feats[fi])
        if self.edges[f].size == 0 or b >= self.edges[f].size:
            return None
        return f, int(b)


def _weighted_median(values: np.ndarray, counts: np.ndarray) -> float:
    mask = counts > 0
    v, c = values[mask], counts[mask]
    if v.size == 0:
        return 0.0
    order = np.argsort(v)
    cs = np.cumsum(c[order])
    return float(v[order][np.searchsorted(cs, cs[-1] / 2.0)])


def fit_forest(X: np.ndarray, y: np.ndarray, config: ForestConfig,
               column_ids: list[str] | None = None) -> ForestModel:
    """Bootstrap-sampled trees over binned features; deterministic per seed."""
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D matrix")
    if not np.isfinite(X).all():
        raise ValueError("X must be imputed (finite) before fitting")
    n, p = X.shape
    y = np.asarray(y)
    if y.shape[0] != n:
        raise ValueError("targets must align with rows")

    if config.is_classification:
        classes = np.unique(y)
        if classes.size < 2:
            raise ValueError("single-class classification target")
        y_enc = np.searchsorted(classes, y).astype(np.int64)
        if config.class_weights == "balanced":
            cw = balanced_weights(y)
        elif isinstance(config.class_weights, dict):
            cw = dict(config.class_weights)
        else:
            cw = {c.item(): 1.0 for c in classes}
        weights = np.asarray([cw[c.item()] for c in classes])[y_enc]
        k = classes.size
        y_raw = y_enc.astype(np.float64)
    else:
        classes = None
        cw = None
        y_enc = np.zeros(n, dtype=np.int64)
        y_raw = y.astype(np.float64)
        weights = np.ones(n)
        k = 1

    edges: list[np.ndarray] = []
    codes = np.empty((n, p), dtype=np.uint8)
    for j in range(p):
        e, c = _bin_feature(X[:, j], config.max_bins)
        edges.append(e)
        codes[:, j] = c

    trees = []
    for ss in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.Generator(np.random.PCG64(ss))
        boot = rng.integers(0, n, size=n)
        builder = _TreeBuilder(codes, edges, y_enc, weights, config, k, y_raw)
        trees.append(builder.build(np.asarray(boot), rng))

    return ForestModel(config=config, trees=trees, n_features=p,
                       classes=classes, class_weights_used=cw,
                       column_ids=list(column_ids) if column_ids else None)


def _tree_apply(tree: Tree, X: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int32)
    while True:
        f = tree.feature[node]
        at_leaf = f < 0
        if at_leaf.all():
            break
        fx = X[np.arange(n), np.where(at_leaf, 0, f)]
        go_left = fx <= tree.threshold[node]
        nxt = np.where(go_left, tree.left[node], tree.right[node])
        node = np.where(at_leaf, node, nxt).astype(np.int32)
    return node


def predict_proba(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Mean of leaf distributions (classification: (n, K) summing to 1)
    or mean of leaf means (regression: (n,))."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature columns, "
                         f"got {X.shape}")
    acc = np.zeros((X.shape[0], model.trees[0].value.shape[1]))
    for tree in model.trees:
        acc += tree.value[_tree_apply(tree, X)]
    acc /= len(model.trees)
    return acc if model.is_classification else acc[:, 0]


def predict_tree_values(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Per-tree regression predictions, shape (n_trees, n); used by the
    tuner's surrogate for an uncertainty estimate."""
    if model.is_classification:
        raise ValueError("per-tree values are for regression models")
    X = np.asarray(X, dtype=np.float64)
    return np.stack([tree.value[_tree_apply(tree, X)][:, 0]
                     for tree in model.trees])


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_forest(model: ForestModel, path: Path | str) -> Path:
    path = Path(path)
    doc = {
        "format": "rf-json/1",
        "config": asdict(model.config),
        "n_features": model.n_features,
        "classes": None if model.classes is None else model.classes.tolist(),
        "class_weights_used": model.class_weights_used,
        "column_ids": model.column_ids,
        "trees": [{
            "feature": t.feature.tolist(),
            "threshold": t.threshold.tolist(),
            "left": t.left.tolist(),
            "right": t.right.tolist(),
            "value": t.value.tolist(),
        } for t in model.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return path


def load_forest(path: Path | str) -> ForestModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "rf-json/1":
        raise ValueError(f"{path}: not a forest dump")
    cfg_doc = dict(doc["config"])
    config = ForestConfig(**cfg_doc)
    trees = [Tree(feature=np.asarray(t["feature"], dtype=np.int32),
                  threshold=np.asarray(t["threshold"]),
                  left=np.asarray(t["left"], dtype=np.int32),
                  right=np.asarray(t["right"], dtype=np.int32),
                  value=np.asarray(t["value"]))
             for t in doc["trees"]]
    classes = doc["classes"]
    return ForestModel(config=config, trees=trees,
                       n_features=int(doc["n_features"]),
                       classes=None if classes is None else np.asarray(classes),
                       class_weights_used=doc.get("class_weights_used"),
                       column_ids=doc.get("column_ids"))

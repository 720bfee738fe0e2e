"""Statistical machinery: bootstrap confidence intervals over the test set,
pairwise significance between experiments, and a small learning curve.

Writes bootstrap_hists.png and learning_curve.png.
"""

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ecgfusion import pipeline
from ecgfusion.features import FeatureVector
from ecgfusion.forest import ForestConfig
from ecgfusion.matrix import impute_and_normalize, matrix_from_vectors, subset_matrix
from ecgfusion.metrics import MetricValue, auroc
from ecgfusion.stats import learning_curve
from ecgfusion.synth import _spec_seeds

N_TRAIN, N_TEST = 1200, 500
N = N_TRAIN + N_TEST
seeds = _spec_seeds(9, N)
jobs = [(f"rk-{i:05d}", dict(task="risk", af_risk=i % 2 == 0,
                             noise_sd_mv=0.02, seed=seeds[i]))
        for i in range(N)]
labels = np.array([float(i % 2 == 0) for i in range(N)])
roles = ["train" if i < N_TRAIN else "test" for i in range(N)]
print(f"extracting {N} records ...")
feats = pipeline.extract_synthetic(jobs, n_workers=2)
matrix = impute_and_normalize(matrix_from_vectors(
    [FeatureVector(rid, *feats[rid]) for rid, _ in jobs], roles, "risk"))
tr, te = matrix.rows_for("train"), matrix.rows_for("test")

rankings = pipeline.fe_rankings(matrix, labels, "risk", depth=30)
selection = pipeline.select_features(rankings, 30)
models = pipeline.train_fe(matrix, labels, "risk", selection,
                           ForestConfig(n_trees=80, min_samples_leaf=2,
                                        class_weights="balanced", seed=0))
fe_scores = models.predict(matrix, te)
rng = np.random.default_rng(0)
weak_scores = 0.6 * fe_scores + 0.4 * rng.random(te.size)   # a worse model

report = pipeline.evaluate_experiments(
    "risk", {"FE": fe_scores, "DL": weak_scores}, labels[te],
    iters=500, seed=3)
print(json.dumps(report.to_json(), indent=1)[:600])

fig, ax = plt.subplots(figsize=(7, 4))
for name, b in report.bootstrap.items():
    ax.hist(b.values, bins=40, alpha=0.6, label=f"{name} "
            f"[{b.ci_low:.3f}, {b.ci_high:.3f}]")
ax.set_xlabel("AUROC over 80% test subsamples")
ax.legend()
fig.tight_layout()
fig.savefig("bootstrap_hists.png", dpi=110)
print("wrote bootstrap_hists.png")

sizes = [100, 300, 900]
train_ids = [matrix.record_ids[i] for i in tr]
strata = [int(labels[i]) for i in tr]
row_of = {rid: i for i, rid in enumerate(matrix.record_ids)}


def fe_pipeline(subset_ids, seed):
    rows = np.asarray(sorted(row_of[r] for r in subset_ids))
    sub = subset_matrix(matrix, rows, te)
    m = pipeline.train_fe(sub, labels[np.r_[rows, te]], "risk", selection,
                          ForestConfig(n_trees=60, min_samples_leaf=2,
                                       class_weights="balanced", seed=seed))
    return MetricValue("AUROC", auroc(m.predict(sub, sub.rows_for("test")),
                                      labels[te]), te.size)


points = learning_curve(fe_pipeline, train_ids, strata, sizes,
                        seeds=[0, 1, 2], experiment="FE")
fig, ax = plt.subplots(figsize=(6.5, 4))
med = [float(np.median([p.metric.value for p in points
                        if p.train_size == s])) for s in sizes]
for p in points:
    ax.plot(p.train_size, p.metric.value, "o", color="tab:orange", alpha=0.5)
ax.plot(sizes, med, "-", color="tab:orange", label="FE median (3 seeds)")
ax.set_xscale("log")
ax.set_xlabel("training records")
ax.set_ylabel("test AUROC")
ax.legend()
fig.tight_layout()
fig.savefig("learning_curve.png", dpi=110)
print("learning curve medians:", dict(zip(sizes, np.round(med, 3))))
print("wrote learning_curve.png")

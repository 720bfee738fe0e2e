"""The FE branch end to end: mRMR rankings per label, the multilabel union
rule, a feature-count sweep with plateau picking, and the forest scores.

Runs on a small synthetic diagnosis set (~2 minutes); writes
feature_sweep.png.
"""

import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ecgfusion import pipeline
from ecgfusion.features import FeatureVector
from ecgfusion.forest import ForestConfig
from ecgfusion.io import ARRHYTHMIA_CLASSES
from ecgfusion.matrix import impute_and_normalize, matrix_from_vectors
from ecgfusion.metrics import f1_max
from ecgfusion.mrmr import plateau_pick
from ecgfusion.synth import _spec_seeds

t0 = time.time()
N_PER = 60
compositions = [()] + [(c,) for c in ARRHYTHMIA_CLASSES]
seeds = _spec_seeds(42, N_PER * len(compositions))
rng = np.random.default_rng(1)
jobs, roles = [], []
i = 0
for comp in compositions:
    part = np.array(["train"] * int(N_PER * 0.7)
                    + ["validation"] * (N_PER - int(N_PER * 0.7)))
    rng.shuffle(part)
    for _ in range(N_PER):
        jobs.append((f"dx-{i:05d}", dict(task="diagnosis", arrhythmias=comp,
                                         noise_sd_mv=0.02, seed=seeds[i])))
        roles.append(part[_])
        i += 1
feats = pipeline.extract_synthetic(jobs, n_workers=2)
vectors = [FeatureVector(rid, *feats[rid]) for rid, _ in jobs]
matrix = impute_and_normalize(matrix_from_vectors(vectors, roles, "diagnosis"))
comp_of = {rid: set(kw["arrhythmias"]) for rid, kw in jobs}
targets = np.stack([[c in comp_of[rid] for c in ARRHYTHMIA_CLASSES]
                    for rid in matrix.record_ids]).astype(float)
print(f"extracted {len(jobs)} records in {time.time() - t0:.0f}s")

rankings = pipeline.fe_rankings(matrix, targets, "diagnosis", depth=40)
for r in rankings:
    print(f"  {r.target_label:6s} top-5: {r.ordered_features[:5]}")

va = matrix.rows_for("validation")
sweep = {}
fig, ax = plt.subplots(figsize=(7, 4.5))
ks = [5, 10, 20, 40]
per_label_f1 = {lab: [] for lab in ARRHYTHMIA_CLASSES}
for k in ks:
    selection = pipeline.select_features(rankings, k)
    models = pipeline.train_fe(matrix, targets, "diagnosis", selection,
                               ForestConfig(n_trees=60, min_samples_leaf=2,
                                            class_weights="balanced", seed=3))
    scores = models.predict(matrix, va)
    f1s = [f1_max(scores[:, j], targets[va, j]) for j in range(6)]
    for lab, v in zip(ARRHYTHMIA_CLASSES, f1s):
        per_label_f1[lab].append(v)
    sweep[k] = float(np.mean(f1s))
    print(f"  k={k:3d}: union {len(selection.selected):3d} features, "
          f"mean validation F1 {sweep[k]:.3f}")

chosen = plateau_pick(sweep, tol=0.005)
print(f"plateau pick: k={chosen.k} (score {chosen.score:.3f}, "
      f"plateau found={chosen.plateau_found})")

for lab in ARRHYTHMIA_CLASSES:
    ax.plot(ks, per_label_f1[lab], marker="o", label=lab)
ax.axvline(chosen.k, color="purple", ls="--", label=f"selected k={chosen.k}")
ax.set_xlabel("features per label (before union)")
ax.set_ylabel("validation max-F1")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig("feature_sweep.png", dpi=110)
print("wrote feature_sweep.png")

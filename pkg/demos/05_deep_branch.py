"""The deep branch at desk scale: train the tiny residual net on a small
risk set, watch the plateau schedule act on the learning rate, then bolt
the engineered features onto the merged head and verify merge neutrality.
"""

import numpy as np

from ecgfusion import pipeline
from ecgfusion.features import FeatureVector
from ecgfusion.forest import ForestConfig
from ecgfusion.matrix import impute_and_normalize, matrix_from_vectors
from ecgfusion.metrics import auroc
from ecgfusion.nn import (Batch, NetConfig, ResidualNet, TrainSchedule,
                          predict_in_batches, prepare_waveform, train_model)
from ecgfusion.synth import GenSpec, _spec_seeds, generate_record

N = 400
seeds = _spec_seeds(5, N)
jobs = [(f"rk-{i:04d}", dict(task="risk", af_risk=i % 2 == 0,
                             noise_sd_mv=0.02, seed=seeds[i]))
        for i in range(N)]
labels = np.array([float(i % 2 == 0) for i in range(N)])
roles = ["train" if i < int(N * 0.75) else "test" for i in range(N)]

print("extracting features + waveforms ...")
feats = pipeline.extract_synthetic(jobs, n_workers=2)
vectors = [FeatureVector(rid, *feats[rid]) for rid, _ in jobs]
matrix = impute_and_normalize(matrix_from_vectors(vectors, roles, "risk"))
waves = np.stack([
    prepare_waveform(generate_record(GenSpec(**kw), rid)[0].samples, 512)
    for rid, kw in jobs]).astype(np.float32)
tr = matrix.rows_for("train")
te = matrix.rows_for("test")

# DL-only
cfg = NetConfig.tiny("risk", input_len=512, block_filters=(8, 16))
net = ResidualNet(cfg, seed=0)
tr_b = Batch(waves=waves[tr], targets=labels[tr][:, None])
te_b = Batch(waves=waves[te], targets=labels[te][:, None])
sched = TrainSchedule(lr=1e-3, batch_size=64, max_epochs=30, seed=0)
state, best = train_model(net, tr_b, te_b, sched,
                          lambda o, t: auroc(o[:, 0], t[:, 0]))
net.load_state(best)
print("epoch  loss    val-AUROC  lr")
for row in state.history[::5]:
    print(f"{row['epoch']:5d}  {row['train_loss']:.4f}  "
          f"{row['val_metric']:.3f}      {row['lr']:.0e}")
dl = auroc(predict_in_batches(net, te_b)[:, 0], labels[te])
print(f"DL-only test AUROC: {dl:.3f}")

# merged FE+DL: selected engineered features enter the head
rankings = pipeline.fe_rankings(matrix, labels, "risk", depth=20)
cols = sorted(pipeline.select_features(rankings, 20).selected)
cfg_m = NetConfig.tiny("risk", input_len=512, block_filters=(8, 16),
                       merge_fe_features=len(cols))
col_idx = [matrix.column_ids.index(c) for c in cols]
fe_all = matrix.values[:, col_idx].astype(np.float32)
net_m = ResidualNet(cfg_m, seed=0)
tr_m = Batch(waves=waves[tr], targets=labels[tr][:, None], fe=fe_all[tr])
te_m = Batch(waves=waves[te], targets=labels[te][:, None], fe=fe_all[te])
state_m, best_m = train_model(net_m, tr_m, te_m, sched,
                              lambda o, t: auroc(o[:, 0], t[:, 0]))
net_m.load_state(best_m)
merged = auroc(predict_in_batches(net_m, te_m)[:, 0], labels[te])
print(f"merged FE+DL test AUROC: {merged:.3f} "
      f"(using {len(cols)} engineered features)")

# FE-only reference
models = pipeline.train_fe(matrix, labels, "risk",
                           pipeline.select_features(rankings, 20),
                           ForestConfig(n_trees=60, min_samples_leaf=2,
                                        class_weights="balanced", seed=0))
fe_score = auroc(models.predict(matrix, te), labels[te])
print(f"FE-only (forest) test AUROC: {fe_score:.3f}")

# merge neutrality: zero the FE weight block => DL-only behaviour, exactly
st = net_m.state_dict()
st["head0.W_fe"] = np.zeros_like(st["head0.W_fe"])
net_m.load_state(st)
net_d = ResidualNet(NetConfig.tiny("risk", input_len=512,
                                   block_filters=(8, 16)), seed=1)
net_d.load_state({k: v for k, v in st.items() if k != "head0.W_fe"})
a = net_m.forward(waves[te][:8], fe=fe_all[te][:8])
b = net_d.forward(waves[te][:8])
print(f"merge-neutrality (zeroed FE weights == DL-only): "
      f"{np.array_equal(a, b)}")

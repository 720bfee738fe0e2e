"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines stream; the whole module takes roughly half an hour on two cores,
dominated by the three synthetic corpora (7k diagnosis, 5k age, 18k risk
records).
"""

import os
import time
import numpy as np
import pytest

from ecgfusion import pipeline
from ecgfusion.features import FeatureVector
from ecgfusion.forest import ForestConfig, fit_forest, predict_proba
from ecgfusion.io import ARRHYTHMIA_CLASSES, read_dataset, write_dataset
from ecgfusion.matrix import (impute_and_normalize, matrix_from_vectors,
                              subset_matrix)
from ecgfusion.metrics import auroc, f1_max, pr_curve_and_auprc, r2_mae
from ecgfusion.mrmr import rank_mrmr, union_select
from ecgfusion.nn import (Batch, NetConfig, ResidualNet, TrainSchedule,
                          gradients, predict_in_batches, prepare_waveform,
                          task_loss, train_model)
from ecgfusion.stats import bootstrap, compare
from ecgfusion.synth import (GenSpec, _spec_seeds, generate_diagnosis_dataset,
                             generate_record)

WORKERS = max(1, min(4, os.cpu_count() or 1))


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}",
          flush=True)
    assert ok, detail


# -- oracles ----------------------------------------------------------------

def pairwise_auroc(scores, labels):
    pos = scores[labels == 1][:, None]
    neg = scores[labels == 0][None, :]
    return float((np.sum(pos > neg) + 0.5 * np.sum(pos == neg))
                 / (pos.size * neg.size))


def exhaustive_f1(scores, labels):
    best = 0.0
    n_pos = labels.sum()
    for t in np.unique(scores):
        pred = scores >= t
        tp = float(np.sum(pred & (labels == 1)))
        if tp + np.sum(pred & (labels == 0)) == 0:
            continue
        ppv = tp / pred.sum()
        se = tp / n_pos
        if ppv + se > 0:
            best = max(best, 2 * ppv * se / (ppv + se))
    return best


def test_criterion_01_metric_oracles():
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst_auroc, worst_f1 = 0.0, 0.0
    for case in range(1000):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, n)
        if labels.sum() == 0:
            labels[0] = 1
        if labels.sum() == n:
            labels[0] = 0
        if case % 3 == 0:   # quantized scores exercise tie handling
            scores = rng.integers(0, 8, n) / 7.0
        else:
            scores = rng.random(n)
        worst_auroc = max(worst_auroc,
                          abs(auroc(scores, labels)
                              - pairwise_auroc(scores, labels)))
        worst_f1 = max(worst_f1,
                       abs(f1_max(scores, labels)
                           - exhaustive_f1(scores, labels)))
    dt = time.time() - t0
    ok = worst_auroc <= 1e-9 and worst_f1 <= 1e-12 and dt < 60
    report(1, ok, f"AUROC worst |err| {worst_auroc:.2e} (<=1e-9), "
                  f"f1_max worst |err| {worst_f1:.2e} (<=1e-12), "
                  f"1000 instances in {dt:.1f}s (<60s)")


def test_criterion_02_auprc_contract():
    t0 = time.time()
    rng = np.random.default_rng(202)
    perfect_ok = True
    for _ in range(20):
        n_pos = int(rng.integers(3, 40))
        n_neg = int(rng.integers(3, 40))
        scores = np.r_[rng.uniform(0.6, 1.0, n_pos), rng.uniform(0.0, 0.4, n_neg)]
        labels = np.r_[np.ones(n_pos, int), np.zeros(n_neg, int)]
        perfect_ok &= pr_curve_and_auprc(scores, labels).auprc >= 0.99
    worst_const = 0.0
    for _ in range(100):
        n = int(rng.integers(20, 400))
        k = int(rng.integers(1, n))
        labels = np.zeros(n, int)
        labels[rng.permutation(n)[:k]] = 1
        curve = pr_curve_and_auprc(np.full(n, 0.5), labels)
        worst_const = max(worst_const, abs(curve.auprc - k / n))
    dt = time.time() - t0
    ok = perfect_ok and worst_const <= 0.01 and dt < 60
    report(2, ok, f"perfect >=0.99 ok={perfect_ok}, constant-score worst "
                  f"|err from prevalence| {worst_const:.4f} (<=0.01), "
                  f"{dt:.1f}s (<60s)")


# -- shared synthetic corpora -------------------------------------------------

def _extract_matrix(jobs, roles, view):
    feats = pipeline.extract_synthetic(jobs, n_workers=WORKERS)
    vectors = [FeatureVector(rid, *feats[rid]) for rid, _ in jobs]
    return impute_and_normalize(matrix_from_vectors(vectors, roles, view))


@pytest.fixture(scope="module")
def diagnosis_corpus():
    """1k records per class + 1k NSR, stratified 80/20 train/test."""
    n_per = 1000
    compositions = [()] + [(c,) for c in ARRHYTHMIA_CLASSES]
    seeds = _spec_seeds(42, n_per * len(compositions))
    rng = np.random.default_rng(43)
    jobs, roles = [], []
    i = 0
    for comp in compositions:
        part = np.array(["train"] * int(n_per * 0.8)
                        + ["test"] * (n_per - int(n_per * 0.8)))
        rng.shuffle(part)
        for j in range(n_per):
            rid = f"dx-{'-'.join(comp) or 'NSR'}-{i:05d}"
            jobs.append((rid, dict(task="diagnosis", arrhythmias=comp,
                                   noise_sd_mv=0.02, seed=seeds[i])))
            roles.append(part[j])
            i += 1
    t0 = time.time()
    matrix = _extract_matrix(jobs, roles, "diagnosis")
    comp_of = {rid: set(kw["arrhythmias"]) for rid, kw in jobs}
    targets = np.stack([[c in comp_of[rid] for c in ARRHYTHMIA_CLASSES]
                        for rid in matrix.record_ids]).astype(float)
    return matrix, targets, time.time() - t0


def test_criterion_03_fe_pipeline_end_to_end(diagnosis_corpus):
    matrix, targets, extract_s = diagnosis_corpus
    t0 = time.time()
    rankings = pipeline.fe_rankings(matrix, targets, "diagnosis", depth=30)
    selection = pipeline.select_features(rankings, k=25)
    models = pipeline.train_fe(matrix, targets, "diagnosis", selection,
                               ForestConfig(n_trees=100, min_samples_leaf=5,
                                            class_weights="balanced", seed=3))
    te = matrix.rows_for("test")
    scores = models.predict(matrix, te)
    per_class = {lab: pr_curve_and_auprc(scores[:, j], targets[te, j]).auprc
                 for j, lab in enumerate(ARRHYTHMIA_CLASSES)}
    macro = float(np.mean(list(per_class.values())))
    dt = extract_s + time.time() - t0
    ok = (macro >= 0.95 and per_class["SB"] >= 0.99
          and per_class["ST"] >= 0.99 and dt < 600)
    detail = ", ".join(f"{k}={v:.3f}" for k, v in per_class.items())
    report(3, ok, f"macro-AUPRC {macro:.4f} (>=0.95); {detail}; "
                  f"SB/ST >= 0.99; runtime {dt:.0f}s (<600s)")


def test_criterion_04_age_regression():
    t0 = time.time()
    n = 5000
    rng = np.random.default_rng(11)
    ages = np.round(rng.uniform(16, 85, n), 3)
    seeds = _spec_seeds(12, n)
    jobs = [(f"age-{i:05d}", dict(task="age", age_years=float(ages[i]),
                                  noise_sd_mv=0.02, seed=seeds[i]))
            for i in range(n)]
    roles = np.array(["train"] * int(n * 0.8) + ["test"] * (n - int(n * 0.8)))
    rng.shuffle(roles)
    tr, te = roles == "train", roles == "test"

    # Oracle first: linear regression on the true generating parameters.
    params = []
    for rid, kw in jobs:
        _, gt = generate_record(GenSpec(**kw), rid)
        params.append((gt.mean_hr_bpm, gt.t_amplitude_mv))
    A = np.column_stack([np.ones(n), np.asarray(params)])
    coef, *_ = np.linalg.lstsq(A[tr], ages[tr], rcond=None)
    r2_oracle, mae_oracle = r2_mae(A[te] @ coef, ages[te])
    print(f"\n  oracle ceiling (recorded): R2={r2_oracle:.3f} "
          f"MAE={mae_oracle:.2f}y", flush=True)

    matrix = _extract_matrix(jobs, roles.tolist(), "age")
    targets = ages.copy()
    rankings = pipeline.fe_rankings(matrix, targets, "age", depth=100)
    selection = pipeline.select_features(rankings, k=100)
    models = pipeline.train_fe(matrix, targets, "age", selection,
                               ForestConfig(n_trees=150,
                                            split_criterion="squared_error",
                                            min_samples_leaf=5, seed=3))
    pred = models.predict(matrix, matrix.rows_for("test"))
    r2_fe, mae_fe = r2_mae(pred, targets[matrix.rows_for("test")])
    dt = time.time() - t0
    ok = (r2_fe >= 0.75 and 0.85 <= r2_oracle <= 0.95 and dt < 600)
    report(4, ok, f"FE+RF R2 {r2_fe:.3f} (>=0.75) vs oracle {r2_oracle:.3f} "
                  f"(~0.9), MAE {mae_fe:.2f}y; runtime {dt:.0f}s (<600s)")


def test_criterion_05_mrmr_redundancy():
    from ecgfusion.matrix import FeatureMatrix
    never_second = 0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        z = rng.normal(size=300)
        y = (z > np.median(z)).astype(int)
        X = np.column_stack([z, z, rng.normal(size=300)])
        m = FeatureMatrix(record_ids=[f"r{i}" for i in range(300)],
                          column_ids=["informative", "duplicate", "noise"],
                          values=X, missing=np.zeros((300, 3), bool),
                          roles=np.array(["train"] * 300),
                          task_view=None, registry_version="t")
        r = rank_mrmr(m, y, "lab", "binary")
        never_second += r.ordered_features[1] != "duplicate"
    report(5, never_second == 100,
           f"duplicate never ranked second in {never_second}/100 seeded trials")


def test_criterion_06_union_properties():
    from ecgfusion.mrmr import FeatureRanking
    rng = np.random.default_rng(606)
    failures = 0
    for _ in range(1000):
        p = int(rng.integers(2, 15))
        n_labels = int(rng.integers(1, 7))
        universe = [f"f{j}" for j in range(p)]
        rankings = []
        for i in range(n_labels):
            order = [universe[k] for k in rng.permutation(p)]
            rankings.append(FeatureRanking(
                target_label=f"lab{i}", ordered_features=order,
                scores=np.arange(p, 0, -1, dtype=float),
                step_scores=np.arange(p, 0, -1, dtype=float),
                greedy_depth=p))
        k1 = int(rng.integers(1, p + 1))
        k2 = int(rng.integers(k1, p + 1))
        s1, s2 = union_select(rankings, k1), union_select(rankings, k2)
        expected = set()
        for r in rankings:
            expected |= set(r.ordered_features[:k1])
        if not (s1.selected <= s2.selected and s1.selected == expected):
            failures += 1
    report(6, failures == 0,
           f"union monotonicity + exact set equality on 1000 random cases "
           f"({failures} failures)")


def test_criterion_07_dl_branch_sanity():
    t0 = time.time()
    # (a) gradient check, double precision
    rng = np.random.default_rng(707)
    cfg = NetConfig.tiny("diagnosis", input_len=64, block_filters=(8, 8),
                         kernel=8, dropout=0.0)
    net = ResidualNet(cfg, seed=1, dtype=np.float64)
    params = {k: v.copy() for k, v in net.state_dict().items()}
    waves = rng.normal(size=(4, 12, 64))
    targets = rng.integers(0, 2, (4, 6)).astype(float)
    _, grads = gradients(cfg, params, waves, targets)

    def loss_at(p):
        m = ResidualNet(cfg, seed=1, dtype=np.float64)
        m.load_state(p)
        out = m.forward(waves, train=True, rng=np.random.default_rng(0))
        return task_loss("diagnosis", out, targets)[0]

    h = 1e-5
    crng = np.random.default_rng(42)
    worst = 0.0
    for name, g in grads.items():
        flat = params[name].ravel()
        for idx in crng.choice(flat.size, size=min(6, flat.size),
                               replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            lp = loss_at(params)
            flat[idx] = orig - h
            lm = loss_at(params)
            flat[idx] = orig
            num = (lp - lm) / (2 * h)
            ana = g.ravel()[idx]
            if max(abs(num), abs(ana)) >= 1e-6:
                worst = max(worst, abs(num - ana) / (abs(num) + abs(ana)))
    grad_ok = worst < 1e-4

    # (b) overfit 256 records to train BCE < 0.05 within 500 epochs
    records, _ = generate_diagnosis_dataset(n_per_class=37, seed=100)
    records = records[:256]
    ow = np.stack([prepare_waveform(r.samples, 512)
                   for r in records]).astype(np.float32)
    ot = np.stack([r.labels.arrhythmia_vector().astype(float)
                   for r in records])
    data = Batch(waves=ow, targets=ot)
    onet = ResidualNet(NetConfig.tiny("diagnosis", input_len=512,
                                      block_filters=(8, 16), kernel=8,
                                      dropout=0.0), seed=5)
    sched = TrainSchedule(lr=1e-3, batch_size=64, max_epochs=500, seed=7,
                          stop_at=-0.035)   # margin under the 0.05 criterion
    state, best = train_model(
        onet, data, data, sched,
        lambda o, t: -task_loss("diagnosis", o, t)[0])
    onet.load_state(best)
    bce, _ = task_loss("diagnosis", predict_in_batches(onet, data), ot)
    overfit_ok = bce < 0.05 and state.epoch <= 500

    # (c) LR trace: exact /10 steps after 5-epoch plateaus
    lnet = ResidualNet(NetConfig.tiny("risk", input_len=64,
                                      block_filters=(8, 8), kernel=8), seed=9)
    tiny = Batch(waves=rng.normal(size=(16, 12, 64)).astype(np.float32),
                 targets=rng.integers(0, 2, (16, 1)).astype(float))
    lstate, _ = train_model(lnet, tiny, tiny,
                            TrainSchedule(lr=1e-3, batch_size=8,
                                          max_epochs=12, seed=0),
                            lambda o, t: 0.5)
    lrs = [row["lr"] for row in lstate.history]
    lr_ok = (lrs[:5] == [1e-3] * 5 and lrs[5] == 1e-3 * 0.1
             and lrs[10] == pytest.approx(1e-5)
             and all(b == a or b == a * 0.1 for a, b in zip(lrs, lrs[1:])))
    dt = time.time() - t0
    ok = grad_ok and overfit_ok and lr_ok and dt < 900
    report(7, ok, f"grad check worst rel err {worst:.2e} (<1e-4); overfit "
                  f"BCE {bce:.4f} (<0.05) in {state.epoch} epochs (<=500); "
                  f"LR trace exact /10 steps: {lr_ok}; runtime {dt:.0f}s "
                  f"(<900s)")


def test_criterion_08_merge_neutrality():
    rng = np.random.default_rng(808)
    cfg_m = NetConfig.tiny("risk", merge_fe_features=12, input_len=128,
                           block_filters=(8, 16), kernel=8)
    cfg_d = NetConfig.tiny("risk", input_len=128, block_filters=(8, 16),
                           kernel=8)
    net_m = ResidualNet(cfg_m, seed=3)
    state = net_m.state_dict()
    state["head0.W_fe"] = np.zeros_like(state["head0.W_fe"])
    net_m.load_state(state)
    net_d = ResidualNet(cfg_d, seed=4)
    net_d.load_state({k: v for k, v in state.items() if k != "head0.W_fe"})
    exact = 0
    for _ in range(100):
        w = rng.normal(size=(2, 12, 128)).astype(np.float32)
        fe = rng.normal(size=(2, 12)).astype(np.float32)
        exact += np.array_equal(net_m.forward(w, fe=fe), net_d.forward(w))
    report(8, exact == 100,
           f"zeroed FE weights reproduce DL-only outputs bit-exactly on "
           f"{exact}/100 random inputs")


def test_criterion_09_bootstrap_significance():
    rng = np.random.default_rng(909)
    labels = (rng.random(600) < 0.4).astype(int)
    scores = labels * 0.3 + rng.random(600) * 0.7
    a1 = bootstrap(auroc, scores, labels, iters=300, seed=5)
    a2 = bootstrap(auroc, scores, labels, iters=300, seed=5)
    det_ok = (a1.ci_low, a1.ci_high) == (a2.ci_low, a2.ci_high)
    identical = compare(a1, a2)
    ident_ok = identical.p_value == pytest.approx(1.0) \
        and not identical.significant

    from ecgfusion.stats import BootstrapResult

    def fake(vals):
        lo, hi = np.percentile(vals, [2.5, 97.5])
        return BootstrapResult(values=vals, mean=float(vals.mean()),
                               ci_low=float(lo), ci_high=float(hi), seed=0)

    sep = compare(fake(rng.normal(0.85, 0.01, 1000)),
                  fake(rng.normal(0.60, 0.01, 1000)))
    sep_ok = sep.p_value < 1e-6 and sep.significant
    ok = det_ok and ident_ok and sep_ok
    report(9, ok, f"seeded CI determinism {det_ok}; identical-sample p="
                  f"{identical.p_value:.3f} (=1); separated p="
                  f"{sep.p_value:.2e} (<<0.01)")


@pytest.fixture(scope="module")
def risk_pool():
    """16k-record training pool + 2k test set for the learning curves."""
    n_train, n_test = 16000, 2000
    n = n_train + n_test
    seeds = _spec_seeds(77, n)
    jobs, roles, labels = [], [], []
    for i in range(n):
        pos = i % 2 == 0
        jobs.append((f"rk-{i:05d}", dict(task="risk", af_risk=pos,
                                         noise_sd_mv=0.02, seed=seeds[i])))
        labels.append(float(pos))
        roles.append("train" if i < n_train else "test")
    t0 = time.time()
    matrix = _extract_matrix(jobs, roles, "risk")
    return jobs, matrix, np.asarray(labels), time.time() - t0


def test_criterion_10_learning_curves(risk_pool):
    jobs, matrix, targets, extract_s = risk_pool
    t0 = time.time()
    tr = matrix.rows_for("train")
    te = matrix.rows_for("test")
    rankings = pipeline.fe_rankings(matrix, targets, "risk", depth=50)
    selection = pipeline.select_features(rankings, k=50)

    sizes = [250, 1000, 4000, 16000]
    seeds = [0, 1, 2]
    fe_median = {}
    for size in sizes:
        vals = []
        for seed in seeds:
            rng = np.random.default_rng(seed)
            rows = np.sort(rng.permutation(tr)[:size])
            sub = subset_matrix(matrix, rows, te)
            models = pipeline.train_fe(
                sub, targets[np.r_[rows, te]], "risk", selection,
                ForestConfig(n_trees=60, min_samples_leaf=2,
                             class_weights="balanced", seed=seed))
            vals.append(auroc(models.predict(sub, sub.rows_for("test")),
                              targets[te]))
        fe_median[size] = float(np.median(vals))
    monotone_ok = all(fe_median[b] >= fe_median[a] - 0.02
                      for a, b in zip(sizes, sizes[1:]))

    # tiny-DL at 250 (median of the same 3 seeds)
    def waves_for(idx):
        out = np.empty((idx.size, 12, 512), dtype=np.float32)
        for k, i in enumerate(idx):
            rec, _ = generate_record(GenSpec(**jobs[i][1]), jobs[i][0])
            out[k] = prepare_waveform(rec.samples, 512)
        return out

    w_te = waves_for(te)
    dl_vals = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.permutation(tr)[:250])
        w_tr = waves_for(rows)
        net = ResidualNet(NetConfig.tiny("risk", input_len=512,
                                         block_filters=(8, 16), kernel=8),
                          seed=seed)
        tr_b = Batch(waves=w_tr, targets=targets[rows][:, None])
        state, best = train_model(
            net, tr_b, tr_b,
            TrainSchedule(lr=1e-3, batch_size=64, max_epochs=25, seed=seed),
            lambda o, t: auroc(o[:, 0], t[:, 0]),
            class_weights=pipeline.balanced_output_weights(tr_b.targets))
        net.load_state(best)
        out = predict_in_batches(net, Batch(waves=w_te,
                                            targets=targets[te][:, None]))
        dl_vals.append(auroc(out[:, 0], targets[te]))
    dl_250 = float(np.median(dl_vals))
    small_data_ok = fe_median[250] > dl_250
    dt = extract_s + time.time() - t0
    ok = monotone_ok and small_data_ok and dt < 1800
    curve = " -> ".join(f"{fe_median[s]:.3f}@{s}" for s in sizes)
    report(10, ok, f"FE median AUROC {curve} non-decreasing(0.02)={monotone_ok}; "
                   f"FE@250 {fe_median[250]:.3f} > tiny-DL@250 {dl_250:.3f}; "
                   f"runtime {dt:.0f}s (<1800s)")


def test_criterion_11_class_weight_effect():
    recalls = {"balanced": [], "none": []}
    for seed in range(5):
        rng = np.random.default_rng(1100 + seed)
        n = 1200
        y = (rng.random(n) < 0.05).astype(int)
        X = rng.normal(size=(n, 6))
        X[:, 0] += 1.1 * y
        X[:, 1] -= 0.8 * y
        yv = (rng.random(500) < 0.05).astype(int)
        Xv = rng.normal(size=(500, 6))
        Xv[:, 0] += 1.1 * yv
        Xv[:, 1] -= 0.8 * yv
        for cw in ("balanced", None):
            m = fit_forest(X, y, ForestConfig(n_trees=40, class_weights=cw,
                                              min_samples_leaf=5, seed=seed))
            pred = predict_proba(m, Xv)[:, 1] > 0.5
            tp = np.sum(pred & (yv == 1))
            recalls["balanced" if cw else "none"].append(tp / max(1, yv.sum()))
    med_b = float(np.median(recalls["balanced"]))
    med_n = float(np.median(recalls["none"]))
    report(11, med_b >= med_n,
           f"95:5 imbalance minority recall: balanced {med_b:.3f} >= "
           f"unweighted {med_n:.3f} (median of 5 seeds)")


def test_criterion_12_roundtrip_and_determinism(tmp_path):
    # (a) dataset write/read bit-exactness
    records, _ = generate_diagnosis_dataset(n_per_class=15, seed=4)
    records = records[:100]
    ds = read_dataset(write_dataset(records, tmp_path / "ds"))
    bit_exact = all(np.array_equal(ds.load(r.record_id).samples, r.samples)
                    and ds.load(r.record_id).labels == r.labels
                    for r in records)

    # (b) every pipeline stage reproducible from (config, seed)
    from ecgfusion.cli import main
    cfg_text = """
task = "diagnosis"
seed = 5
out_dir = "{out}"
[data]
n_per_class = 24
[split]
train = 0.6
validation = 0.15
test = 0.25
[select]
k = 6
depth = 8
[forest]
n_trees = 15
[net]
max_epochs = 2
input_len = 256
[evaluate]
bootstrap_iters = 40
"""
    digests = []
    for run in ("a", "b"):
        out = tmp_path / f"run-{run}"
        cfg = tmp_path / f"cfg-{run}.toml"
        cfg.write_text(cfg_text.format(out=out))
        for cmd in ("synth", "extract", "select", "train-rf", "train-dl",
                    "train-merged", "evaluate"):
            assert main([cmd, "--config", str(cfg)]) == 0, cmd
        import hashlib
        digest = {}
        for p in sorted(out.rglob("*")):
            if p.is_file() and p.name not in ("stage.json", "manifest.json"):
                digest[str(p.relative_to(out))] = hashlib.sha256(
                    p.read_bytes()).hexdigest()
        digests.append(digest)
    reproducible = digests[0] == digests[1]
    if not reproducible:
        diff = [k for k in digests[0]
                if digests[0].get(k) != digests[1].get(k)]
        print("  differing artifacts:", diff[:10], flush=True)
    ok = bit_exact and reproducible
    report(12, ok, f"write/read bit-exact on 100 records: {bit_exact}; "
                   f"two identical runs produced identical artifact hashes "
                   f"({len(digests[0])} files): {reproducible}")

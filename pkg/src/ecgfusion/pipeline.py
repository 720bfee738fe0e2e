"""Experiment engine: the five pipeline steps shared by CLI and tests.

Wires the feature bank, mRMR selection, forest, deep branch and merged
model into task-level experiments (FE, DL, FE+DL) over one dataset plus
one split, and computes the evaluation report with bootstrap confidence
intervals and pairwise significance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forest import ForestConfig, ForestModel, fit_forest, predict_proba
from .io import ARRHYTHMIA_CLASSES, EcgDataset
from .matrix import FeatureMatrix
from .metrics import auroc, f1_max, pr_curve_and_auprc, r2_mae
from .mrmr import FeatureRanking, UnionSelection, rank_mrmr, union_select
from .nn import (Batch, NetConfig, ResidualNet, TrainSchedule, predict_in_batches,
                 prepare_waveform, train_model)
from .stats import BootstrapResult, SignificanceReport, bootstrap, compare

EXPERIMENTS = ("FE", "DL", "FE+DL")


def _gen_extract_one(args) -> tuple[str, np.ndarray, np.ndarray]:
    from .features import extract_features
    from .synth import GenSpec, generate_record
    rid, spec_kwargs = args
    rec, _ = generate_record(GenSpec(**spec_kwargs), rid)
    fv = extract_features(rec)
    return rid, fv.values, fv.missing


def extract_synthetic(jobs: list[tuple[str, dict]],
                      n_workers: int = 1) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Generate records from (record_id, GenSpec kwargs) jobs and extract
    their features without materializing waveforms; the cheap path for
    large desk-scale corpora."""
    from multiprocessing import Pool
    if n_workers <= 1:
        return {r: (v, m) for r, v, m in map(_gen_extract_one, jobs)}
    with Pool(n_workers) as pool:
        return {r: (v, m) for r, v, m in
                pool.imap(_gen_extract_one, jobs, chunksize=8)}


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------

def targets_for(matrix: FeatureMatrix, dataset: EcgDataset, task: str) -> np.ndarray:
    """Target array aligned with the matrix rows."""
    if task == "diagnosis":
        return np.stack([dataset.labels_of(rid).arrhythmia_vector().astype(float)
                         for rid in matrix.record_ids])
    if task == "risk":
        return np.asarray([float(dataset.labels_of(rid).af_risk)
                           for rid in matrix.record_ids])
    if task == "age":
        return np.asarray([float(dataset.labels_of(rid).age_years)
                           for rid in matrix.record_ids])
    raise ValueError(f"unknown task {task!r}")


def task_labels(task: str) -> list[str]:
    return list(ARRHYTHMIA_CLASSES) if task == "diagnosis" else [task]


# ---------------------------------------------------------------------------
# FE branch
# ---------------------------------------------------------------------------

def fe_rankings(matrix: FeatureMatrix, targets: np.ndarray, task: str,
                depth: int | None = None) -> list[FeatureRanking]:
    """One mRMR ranking per label (six for the multilabel diagnosis)."""
    tr = matrix.rows_for("train")
    if task == "diagnosis":
        return [rank_mrmr(matrix, targets[tr, j], label, "binary", depth=depth)
                for j, label in enumerate(ARRHYTHMIA_CLASSES)]
    kind = "continuous" if task == "age" else "binary"
    return [rank_mrmr(matrix, targets[tr], task, kind, depth=depth)]


def select_features(rankings: list[FeatureRanking], k: int) -> UnionSelection:
    return union_select(rankings, k)


@dataclass
class FeModels:
    """One forest per label (six one-vs-rest forests for diagnosis)."""

    task: str
    columns: list[str]
    models: dict[str, ForestModel]

    def predict(self, matrix: FeatureMatrix, rows: np.ndarray) -> np.ndarray:
        col_idx = [matrix.column_ids.index(c) for c in self.columns]
        X = matrix.values[np.ix_(rows, col_idx)]
        if self.task == "diagnosis":
            return np.stack([predict_proba(self.models[lab], X)[:, 1]
                             for lab in ARRHYTHMIA_CLASSES], axis=1)
        if self.task == "risk":
            return predict_proba(self.models["risk"], X)[:, 1]
        return predict_proba(self.models["age"], X)


def train_fe(matrix: FeatureMatrix, targets: np.ndarray, task: str,
             selection: UnionSelection, config: ForestConfig) -> FeModels:
    """Fit the forest(s) on the train rows over the selected columns."""
    if not matrix.normalized:
        raise ValueError("matrix must be imputed/normalized before training")
    columns = sorted(selection.selected)
    tr = matrix.rows_for("train")
    col_idx = [matrix.column_ids.index(c) for c in columns]
    X = matrix.values[np.ix_(tr, col_idx)]
    models: dict[str, ForestModel] = {}
    if task == "diagnosis":
        for j, label in enumerate(ARRHYTHMIA_CLASSES):
            models[label] = fit_forest(X, targets[tr, j].astype(int),
                                       config, column_ids=columns)
    elif task == "risk":
        models["risk"] = fit_forest(X, targets[tr].astype(int), config,
                                    column_ids=columns)
    else:
        reg_cfg = config if not config.is_classification else ForestConfig(
            n_trees=config.n_trees, max_depth=config.max_depth,
            split_criterion="squared_error",
            min_samples_leaf=config.min_samples_leaf,
            n_features_selected=config.n_features_selected,
            seed=config.seed, max_bins=config.max_bins)
        models["age"] = fit_forest(X, targets[tr], reg_cfg, column_ids=columns)
    return FeModels(task=task, columns=columns, models=models)


def forest_search_space(task: str, max_k: int) -> list:
    """Default hyperparameter space: tree count, depth, leaf size, criterion
    and the number of mRMR-selected features."""
    from .search import Dimension
    criteria = (("gini", "entropy") if task != "age"
                else ("squared_error", "absolute_error"))
    k_choices = tuple(k for k in (25, 50, 100, 200) if k < max_k) + (max_k,)
    return [
        Dimension("n_trees", "int", 50, 500),
        Dimension("max_depth", "int", 4, 33),       # 33 encodes "unlimited"
        Dimension("min_samples_leaf", "int", 1, 100, log=True),
        Dimension("split_criterion", "cat", choices=criteria),
        Dimension("n_features", "cat", choices=k_choices),
    ]


def tune_forest(matrix: FeatureMatrix, targets: np.ndarray, task: str,
                rankings: list[FeatureRanking], budget: int, seed: int):
    """SMBO over the forest space; the objective trains on the train rows
    and scores the validation rows with the task metric (mean max-F1 /
    AUROC / negative MAE). Returns (trace, best ForestConfig, selection)."""
    from .search import tune
    va = matrix.rows_for("validation")
    if va.size == 0:
        raise ValueError("hyperparameter search needs validation rows")
    max_k = len(rankings[0].ordered_features)
    space = forest_search_space(task, max_k)

    def objective(cfg: dict) -> float:
        selection = select_features(rankings, int(cfg["n_features"]))
        fc = ForestConfig(
            n_trees=int(cfg["n_trees"]),
            max_depth=None if cfg["max_depth"] >= 33 else int(cfg["max_depth"]),
            split_criterion=cfg["split_criterion"],
            min_samples_leaf=int(cfg["min_samples_leaf"]),
            n_features_selected=int(cfg["n_features"]),
            class_weights="balanced" if task != "age" else None,
            seed=seed)
        models = train_fe(matrix, targets, task, selection, fc)
        scores = models.predict(matrix, va)
        if task == "diagnosis":
            return float(np.mean([f1_max(scores[:, j], targets[va, j])
                                  for j in range(targets.shape[1])
                                  if 0 < targets[va, j].sum()]))
        if task == "risk":
            return auroc(scores, targets[va])
        return -float(np.mean(np.abs(scores - targets[va])))

    trace = tune(space, objective, budget=budget, seed=seed)
    best = trace.best_config
    assert best is not None
    best_cfg = ForestConfig(
        n_trees=int(best["n_trees"]),
        max_depth=None if best["max_depth"] >= 33 else int(best["max_depth"]),
        split_criterion=best["split_criterion"],
        min_samples_leaf=int(best["min_samples_leaf"]),
        n_features_selected=int(best["n_features"]),
        class_weights="balanced" if task != "age" else None,
        seed=seed)
    selection = select_features(rankings, int(best["n_features"]))
    return trace, best_cfg, selection


# ---------------------------------------------------------------------------
# DL / merged branch
# ---------------------------------------------------------------------------

def load_waveforms(dataset: EcgDataset, record_ids: list[str],
                   input_len: int) -> np.ndarray:
    return np.stack([prepare_waveform(dataset.load(rid).samples, input_len)
                     for rid in record_ids]).astype(np.float32)


def fe_inputs(matrix: FeatureMatrix, columns: list[str],
              rows: np.ndarray) -> np.ndarray:
    col_idx = [matrix.column_ids.index(c) for c in columns]
    return matrix.values[np.ix_(rows, col_idx)].astype(np.float32)


def default_val_metric(task: str):
    """Checkpoint-selection metric per task (maximized; MAE negated)."""
    if task == "diagnosis":
        def macro_auprc(outputs, targets):
            vals = [pr_curve_and_auprc(outputs[:, j], targets[:, j]).auprc
                    for j in range(targets.shape[1])
                    if 0 < targets[:, j].sum() < targets.shape[0]]
            return float(np.mean(vals)) if vals else 0.0
        return macro_auprc
    if task == "risk":
        return lambda outputs, targets: auroc(outputs[:, 0], targets[:, 0])
    return lambda outputs, targets: -float(np.mean(np.abs(outputs[:, 0]
                                                          - targets[:, 0])))


def balanced_output_weights(targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-output (w_pos, w_neg) with the N/(K n_c) convention per label."""
    t = targets if targets.ndim == 2 else targets[:, None]
    pos = t.mean(axis=0).clip(1e-6, 1 - 1e-6)
    return 1.0 / (2.0 * pos), 1.0 / (2.0 * (1.0 - pos))


def train_dl(dataset: EcgDataset, matrix: FeatureMatrix, targets: np.ndarray,
             task: str, net_config: NetConfig, schedule: TrainSchedule,
             merge_columns: list[str] | None = None,
             class_weighting: bool = True):
    """Train the DL (or merged, when merge columns are given) experiment.

    Returns (net with best params loaded, TrainState).
    """
    tr = matrix.rows_for("train")
    va = matrix.rows_for("validation")
    if va.size == 0:
        va = tr
    ids = matrix.record_ids

    def batch_for(rows: np.ndarray) -> Batch:
        waves = load_waveforms(dataset, [ids[i] for i in rows],
                               net_config.input_len)
        t = targets[rows]
        if t.ndim == 1:
            t = t[:, None]
        fe = None
        if merge_columns:
            fe = fe_inputs(matrix, merge_columns, rows)
        return Batch(waves=waves, targets=t, fe=fe)

    train_b = batch_for(tr)
    val_b = batch_for(va)
    net = ResidualNet(net_config, seed=schedule.seed)
    weights = None
    if class_weighting and task in ("diagnosis", "risk"):
        weights = balanced_output_weights(train_b.targets)
    metric = default_val_metric(task)
    state, best = train_model(net, train_b, val_b, schedule, metric,
                              greater_is_better=True, class_weights=weights)
    net.load_state(best)
    return net, state


def dl_predict(net: ResidualNet, dataset: EcgDataset, matrix: FeatureMatrix,
               rows: np.ndarray, merge_columns: list[str] | None = None
               ) -> np.ndarray:
    ids = matrix.record_ids
    waves = load_waveforms(dataset, [ids[i] for i in rows],
                           net.config.input_len)
    fe = fe_inputs(matrix, merge_columns, rows) if merge_columns else None
    out = predict_in_batches(net, Batch(waves=waves, fe=fe,
                                        targets=np.zeros((rows.size, 1))))
    return out if net.config.task == "diagnosis" else out[:, 0]


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def point_metrics(task: str, scores: np.ndarray, targets: np.ndarray) -> dict:
    """Headline point metrics per task (diagnosis also per label)."""
    if task == "diagnosis":
        per_label = {}
        for j, label in enumerate(ARRHYTHMIA_CLASSES):
            curve = pr_curve_and_auprc(scores[:, j], targets[:, j])
            per_label[label] = {
                "AUPRC": curve.auprc,
                "AUPRC_raw": curve.auprc_raw,
                "F1max": f1_max(scores[:, j], targets[:, j]),
            }
        return {
            "per_label": per_label,
            "macro_AUPRC": float(np.mean([v["AUPRC"] for v in per_label.values()])),
            "macro_F1max": float(np.mean([v["F1max"] for v in per_label.values()])),
        }
    if task == "risk":
        return {"AUROC": auroc(scores, targets)}
    r2, mae = r2_mae(scores, targets)
    return {"R2": r2, "MAE": mae}


def headline_metric_fn(task: str):
    """The bootstrapped scalar per task: macro-AUPRC / AUROC / R^2."""
    if task == "diagnosis":
        def macro(scores, targets):
            vals = []
            for j in range(targets.shape[1]):
                if targets[:, j].sum() == 0:
                    raise ValueError("label absent in subsample")
                vals.append(pr_curve_and_auprc(scores[:, j], targets[:, j]).auprc)
            return float(np.mean(vals))
        return macro
    if task == "risk":
        return auroc
    def r2_only(scores, targets):
        r2, _ = r2_mae(scores, targets)
        if r2 is None:
            raise ValueError("constant truths in subsample")
        return r2
    return r2_only


@dataclass
class EvaluationReport:
    task: str
    n_test: int
    experiments: dict[str, dict]
    bootstrap: dict[str, BootstrapResult]
    significance: list[SignificanceReport]

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "n_test": self.n_test,
            "experiments": self.experiments,
            "bootstrap": {name: {"mean": b.mean, "ci_low": b.ci_low,
                                 "ci_high": b.ci_high, "seed": b.seed,
                                 "iterations": int(b.values.size)}
                          for name, b in self.bootstrap.items()},
            "significance": [{"pair": s.pair, "t": s.t_statistic,
                              "p_value": s.p_value,
                              "significant": s.significant}
                             for s in self.significance],
        }


def evaluate_experiments(task: str, test_scores: dict[str, np.ndarray],
                         test_targets: np.ndarray, iters: int = 1000,
                         seed: int = 0) -> EvaluationReport:
    """Point metrics, bootstrap CIs and all available pairwise comparisons."""
    metric = headline_metric_fn(task)
    experiments = {}
    boots: dict[str, BootstrapResult] = {}
    for name, scores in test_scores.items():
        experiments[name] = point_metrics(task, scores, test_targets)
        boots[name] = bootstrap(metric, scores, test_targets,
                                iters=iters, seed=seed)
    pairs = [("FE", "DL"), ("FE", "FE+DL"), ("DL", "FE+DL")]
    significance = [compare(boots[a], boots[b], pair=f"{a} vs {b}")
                    for a, b in pairs if a in boots and b in boots]
    n_test = test_targets.shape[0]
    return EvaluationReport(task=task, n_test=n_test, experiments=experiments,
                            bootstrap=boots, significance=significance)

"""Command-line experiment runner.

Eight subcommands cover the pipeline: synth, extract, select, train-rf,
train-dl, train-merged, evaluate, learning-curve. A TOML config defines the
experiment; ``--set section.key=value`` overrides individual entries. Every
stage writes its artifacts plus a stage manifest with an input fingerprint;
rerunning with unchanged inputs is a cache hit. Exit codes: 0 success,
2 config error, 3 missing stage dependency, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:
    import tomli as tomllib

from . import pipeline
from .forest import ForestConfig, save_forest
from .io import SplitPolicy, make_split, read_dataset
from .matrix import (assemble_matrix, impute_and_normalize, load_matrix,
                     save_matrix, subset_matrix)
from .metrics import MetricValue
from .nn import NetConfig, TrainSchedule, export_history_csv, save_checkpoint
from .registry import get_registry
from .stats import learning_curve
from .synth import generate_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_RUNTIME = 4


class ConfigError(Exception):
    pass


class DependencyError(Exception):
    pass


DEFAULTS: dict = {
    "task": "diagnosis",
    "seed": 0,
    "out_dir": "out",
    "data": {"n_per_class": 20, "n": 400, "positive_fraction": 0.5,
             "noise_sd_mv": 0.02},
    "split": {"train": 0.7, "validation": 0.1, "test": 0.2},
    "select": {"k": 25, "depth": 50, "sweep": []},
    "forest": {"n_trees": 100, "max_depth": 0, "min_samples_leaf": 5,
               "criterion": "gini", "class_weights": "balanced",
               "tune_budget": 0},
    "net": {"profile": "tiny", "input_len": 512, "max_epochs": 20,
            "batch_size": 64, "lr": 1e-3, "merge_hidden": []},
    "evaluate": {"bootstrap_iters": 200},
    "learning_curve": {"sizes": [100, 200], "seeds": [0, 1, 2],
                       "experiments": ["FE"]},
}


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULTS)   # overrides must never touch the defaults
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            with open(p, "rb") as fh:
                cfg = _merge(cfg, tomllib.load(fh))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config field {key!r}")
        node[parts[-1]] = value
    if cfg["task"] not in ("diagnosis", "risk", "age"):
        raise ConfigError(f"task must be diagnosis|risk|age, got {cfg['task']!r}")
    return cfg


# ---------------------------------------------------------------------------
# Artifact bookkeeping
# ---------------------------------------------------------------------------

def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True,
                                     default=str).encode()).hexdigest()


class StageIO:
    """Stage cache + run-manifest bookkeeping under one output directory."""

    def __init__(self, out_dir: Path, config: dict):
        self.out_dir = out_dir
        self.config = config
        out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path = out_dir / "manifest.json"

    def stage_dir(self, stage: str) -> Path:
        d = self.out_dir / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def stage_manifest(self, stage: str) -> Path:
        return self.stage_dir(stage) / "stage.json"

    def is_cached(self, stage: str, fprint: str) -> bool:
        sm = self.stage_manifest(stage)
        if not sm.exists():
            return False
        try:
            doc = json.loads(sm.read_text())
        except json.JSONDecodeError:
            return False
        if doc.get("input_fingerprint") != fprint:
            return False
        return all((self.out_dir / rel).exists() for rel in doc.get("outputs", {}))

    def require(self, stage: str) -> dict:
        sm = self.stage_manifest(stage)
        if not sm.exists():
            raise DependencyError(
                f"stage '{stage}' has not been run (missing {sm}); run "
                f"`ecgfusion {stage}` first")
        return json.loads(sm.read_text())

    def finish(self, stage: str, fprint: str, outputs: list[Path],
               started: float, seed: int | None = None) -> None:
        rels = {}
        for p in outputs:
            rels[str(p.relative_to(self.out_dir))] = file_sha256(p)
        doc = {"stage": stage, "input_fingerprint": fprint, "outputs": rels,
               "elapsed_s": round(time.time() - started, 3)}
        if seed is not None:
            doc["seed"] = seed
        self.stage_manifest(stage).write_text(json.dumps(doc, indent=1))
        self._update_run_manifest(stage, doc)

    def _update_run_manifest(self, stage: str, doc: dict) -> None:
        manifest = {"config": self.config, "stages": {}}
        if self.manifest_path.exists():
            try:
                manifest = json.loads(self.manifest_path.read_text())
            except json.JSONDecodeError:
                pass
        manifest["config"] = self.config
        manifest.setdefault("stages", {})[stage] = doc
        self.manifest_path.write_text(json.dumps(manifest, indent=1))

    def upstream_hash(self, stage: str) -> str:
        return fingerprint(self.require(stage).get("outputs", {}))


# ---------------------------------------------------------------------------
# Stage implementations
# ---------------------------------------------------------------------------

def cmd_synth(io: StageIO) -> None:
    cfg = io.config
    fprint = fingerprint({"task": cfg["task"], "seed": cfg["seed"],
                          "data": cfg["data"]})
    if io.is_cached("synth", fprint):
        print("synth: cache hit, skipping")
        return
    t0 = time.time()
    data_dir = io.stage_dir("synth")
    manifest = generate_dataset(
        cfg["task"], data_dir, cfg["seed"],
        n_per_class=cfg["data"]["n_per_class"], n=cfg["data"]["n"],
        positive_fraction=cfg["data"]["positive_fraction"],
        noise_sd_mv=cfg["data"]["noise_sd_mv"])
    outputs = [manifest, data_dir / "ground_truth.jsonl"]
    outputs += sorted((data_dir / "signals").glob("*.ecg"))
    io.finish("synth", fprint, outputs, t0)
    print(f"synth: wrote {manifest}")


def _split_policy(cfg: dict) -> SplitPolicy:
    s = cfg["split"]
    stratify = {"diagnosis": "arrhythmia", "risk": "af_risk",
                "age": None}[cfg["task"]]
    return SplitPolicy(train=s["train"], validation=s["validation"],
                       test=s["test"], stratify_by=stratify,
                       name=f"{cfg['task']}-default")


def cmd_extract(io: StageIO) -> None:
    cfg = io.config
    fprint = fingerprint({"upstream": io.upstream_hash("synth"),
                          "split": cfg["split"], "seed": cfg["seed"],
                          "registry": get_registry().version})
    if io.is_cached("extract", fprint):
        print("extract: cache hit, skipping")
        return
    t0 = time.time()
    dataset = read_dataset(io.out_dir / "synth" / "manifest.jsonl")
    split = make_split(dataset, _split_policy(cfg), cfg["seed"])
    matrix = assemble_matrix(dataset, split, task_view=cfg["task"])
    matrix = impute_and_normalize(matrix)
    out = io.stage_dir("extract")
    save_matrix(matrix, out / "matrix")
    (out / "registry.json").write_text(json.dumps(get_registry().to_json()))
    split_doc = {p: sorted(getattr(split, p)) for p in
                 ("train", "validation", "test")}
    (out / "split.json").write_text(json.dumps(split_doc))
    outputs = [out / "matrix.json", out / "matrix.bin", out / "matrix.mask.bin",
               out / "registry.json", out / "split.json"]
    io.finish("extract", fprint, outputs, t0)
    print(f"extract: {matrix.values.shape[0]} rows x "
          f"{matrix.values.shape[1]} columns")


def cmd_select(io: StageIO) -> None:
    cfg = io.config
    fprint = fingerprint({"upstream": io.upstream_hash("extract"),
                          "select": cfg["select"]})
    if io.is_cached("select", fprint):
        print("select: cache hit, skipping")
        return
    t0 = time.time()
    dataset = read_dataset(io.out_dir / "synth" / "manifest.jsonl")
    matrix = load_matrix(io.out_dir / "extract" / "matrix")
    targets = pipeline.targets_for(matrix, dataset, cfg["task"])
    rankings = pipeline.fe_rankings(matrix, targets, cfg["task"],
                                    depth=cfg["select"]["depth"])
    selection = pipeline.select_features(rankings, cfg["select"]["k"])
    out = io.stage_dir("select")
    (out / "rankings.json").write_text(
        json.dumps([r.to_json() for r in rankings]))
    (out / "union.json").write_text(json.dumps(selection.to_json()))
    io.finish("select", fprint, [out / "rankings.json", out / "union.json"], t0)
    print(f"select: union of top-{selection.k_per_label} -> "
          f"{len(selection.selected)} features")


def _forest_config(cfg: dict, seed_shift: int = 0) -> ForestConfig:
    return _forest_config_with_seed(cfg, cfg["seed"] + seed_shift)


def _forest_config_with_seed(cfg: dict, seed: int) -> ForestConfig:
    f = cfg["forest"]
    criterion = f["criterion"]
    if cfg["task"] == "age" and criterion in ("gini", "entropy"):
        criterion = "squared_error"
    return ForestConfig(
        n_trees=f["n_trees"],
        max_depth=f["max_depth"] or None,
        split_criterion=criterion,
        min_samples_leaf=f["min_samples_leaf"],
        n_features_selected=cfg["select"]["k"],
        class_weights=(f["class_weights"] or None) if cfg["task"] != "age" else None,
        seed=seed)


def _load_selection(io: StageIO):
    from .mrmr import UnionSelection
    doc = json.loads((io.out_dir / "select" / "union.json").read_text())
    return UnionSelection(
        k_per_label=doc["k_per_label"],
        per_label_top_k={k: frozenset(v) for k, v in
                         doc["per_label_top_k"].items()},
        selected=frozenset(doc["selected"]))


def _stage_seed(cfg: dict, stage: str) -> int:
    # distinct per-experiment seeds by default; collisions are flagged below
    offsets = {"train-rf": 0, "train-dl": 1, "train-merged": 2}
    return cfg["seed"] + offsets.get(stage, 0)


def _flag_seed_collision(io: StageIO, stage: str, seed: int) -> None:
    for other in ("train-rf", "train-dl", "train-merged"):
        if other == stage:
            continue
        sm = io.stage_manifest(other)
        if sm.exists():
            try:
                doc = json.loads(sm.read_text())
            except json.JSONDecodeError:
                continue
            if doc.get("seed") == seed:
                print(f"warning: {stage} reuses seed {seed} already used by "
                      f"{other}; experiments will share randomness",
                      file=sys.stderr)


def cmd_train_rf(io: StageIO) -> None:
    cfg = io.config
    io.require("extract")
    io.require("select")
    seed = _stage_seed(cfg, "train-rf")
    fprint = fingerprint({"extract": io.upstream_hash("extract"),
                          "select": io.upstream_hash("select"),
                          "forest": cfg["forest"], "seed": seed})
    if io.is_cached("train-rf", fprint):
        print("train-rf: cache hit, skipping")
        return
    _flag_seed_collision(io, "train-rf", seed)
    t0 = time.time()
    dataset = read_dataset(io.out_dir / "synth" / "manifest.jsonl")
    matrix = load_matrix(io.out_dir / "extract" / "matrix")
    targets = pipeline.targets_for(matrix, dataset, cfg["task"])
    out = io.stage_dir("train-rf")
    outputs = []

    budget = int(cfg["forest"]["tune_budget"])
    if budget > 0:
        from .mrmr import FeatureRanking
        docs = json.loads((io.out_dir / "select" / "rankings.json").read_text())
        rankings = [FeatureRanking.from_json(d) for d in docs]
        trace, forest_cfg, selection = pipeline.tune_forest(
            matrix, targets, cfg["task"], rankings, budget, seed)
        (out / "tune_trace.json").write_text(json.dumps(trace.to_json(),
                                                        default=float))
        outputs.append(out / "tune_trace.json")
        print(f"train-rf: tuned over {budget} evaluations; best "
              f"{trace.best_config} -> {trace.best_score:.4f}")
    else:
        selection = _load_selection(io)
        forest_cfg = _forest_config_with_seed(cfg, seed)

    models = pipeline.train_fe(matrix, targets, cfg["task"], selection,
                               forest_cfg)
    for label, model in models.models.items():
        p = out / f"forest-{label}.json"
        save_forest(model, p)
        outputs.append(p)
    (out / "selection.json").write_text(json.dumps(sorted(selection.selected)))
    outputs.append(out / "selection.json")
    va = matrix.rows_for("validation")
    score_rows = va if va.size else matrix.rows_for("train")
    scores = models.predict(matrix, score_rows)
    val_metrics = pipeline.point_metrics(cfg["task"], scores,
                                         targets[score_rows])
    (out / "validation.json").write_text(json.dumps(val_metrics, default=float))
    outputs.append(out / "validation.json")
    io.finish("train-rf", fprint, outputs, t0, seed=seed)
    print(f"train-rf: {len(models.models)} forest(s); validation "
          f"{json.dumps(val_metrics, default=float)[:160]}")


def _net_config(cfg: dict, merge_features: int = 0) -> NetConfig:
    n = cfg["net"]
    merge_hidden = tuple(int(h) for h in n["merge_hidden"])
    if n["profile"] == "full":
        return NetConfig.full(cfg["task"], merge_fe_features=merge_features,
                              merge_hidden=merge_hidden)
    return NetConfig.tiny(cfg["task"], merge_fe_features=merge_features,
                          merge_hidden=merge_hidden,
                          input_len=n["input_len"])


def _schedule(cfg: dict) -> TrainSchedule:
    n = cfg["net"]
    return TrainSchedule(lr=n["lr"], batch_size=n["batch_size"],
                         max_epochs=n["max_epochs"], seed=cfg["seed"])


def _train_net_stage(io: StageIO, stage: str, merged: bool) -> None:
    cfg = io.config
    io.require("extract")
    seed = _stage_seed(cfg, stage)
    deps = {"extract": io.upstream_hash("extract")}
    merge_columns = None
    if merged:
        io.require("select")
        deps["select"] = io.upstream_hash("select")
        # Prefer the FE stage's effective selection (the tuned feature count
        # feeds the concatenation, mirroring the step ordering); fall back
        # to the raw union.
        rf_sel = io.out_dir / "train-rf" / "selection.json"
        if rf_sel.exists():
            merge_columns = sorted(json.loads(rf_sel.read_text()))
            deps["train-rf-selection"] = file_sha256(rf_sel)
        else:
            merge_columns = sorted(_load_selection(io).selected)
    fprint = fingerprint({**deps, "net": cfg["net"], "seed": seed})
    if io.is_cached(stage, fprint):
        print(f"{stage}: cache hit, skipping")
        return
    _flag_seed_collision(io, stage, seed)
    t0 = time.time()
    dataset = read_dataset(io.out_dir / "synth" / "manifest.jsonl")
    matrix = load_matrix(io.out_dir / "extract" / "matrix")
    targets = pipeline.targets_for(matrix, dataset, cfg["task"])
    net_cfg = _net_config(cfg, len(merge_columns) if merge_columns else 0)
    schedule = _schedule(cfg)
    schedule = TrainSchedule(lr=schedule.lr, batch_size=schedule.batch_size,
                             max_epochs=schedule.max_epochs, seed=seed)
    net, state = pipeline.train_dl(dataset, matrix, targets, cfg["task"],
                                   net_cfg, schedule,
                                   merge_columns=merge_columns)
    out = io.stage_dir(stage)
    ckpt = out / "checkpoint.ecgn"
    save_checkpoint(ckpt, net.config, net.state_dict(),
                    epoch=state.best_epoch, metric=state.best_metric)
    hist = export_history_csv(state, out / "history.csv")
    if merge_columns:
        (out / "merge_columns.json").write_text(json.dumps(merge_columns))
        io.finish(stage, fprint, [ckpt, hist, out / "merge_columns.json"],
                  t0, seed=seed)
    else:
        io.finish(stage, fprint, [ckpt, hist], t0, seed=seed)
    print(f"{stage}: best val metric {state.best_metric:.4f} "
          f"at epoch {state.best_epoch}")


def cmd_train_dl(io: StageIO) -> None:
    _train_net_stage(io, "train-dl", merged=False)


def cmd_train_merged(io: StageIO) -> None:
    _train_net_stage(io, "train-merged", merged=True)


def cmd_evaluate(io: StageIO) -> None:
    cfg = io.config
    io.require("extract")
    stage_names = {"FE": "train-rf", "DL": "train-dl", "FE+DL": "train-merged"}
    present = {exp: st for exp, st in stage_names.items()
               if io.stage_manifest(st).exists()}
    if not present:
        raise DependencyError("no trained experiment found; run train-rf, "
                              "train-dl or train-merged first")
    deps = {st: io.upstream_hash(st) for st in present.values()}
    fprint = fingerprint({**deps, "evaluate": cfg["evaluate"],
                          "seed": cfg["seed"]})
    if io.is_cached("evaluate", fprint):
        print("evaluate: cache hit, skipping")
        return
    t0 = time.time()
    dataset = read_dataset(io.out_dir / "synth" / "manifest.jsonl")
    matrix = load_matrix(io.out_dir / "extract" / "matrix")
    targets = pipeline.targets_for(matrix, dataset, cfg["task"])
    te = matrix.rows_for("test")
    if te.size == 0:
        raise DependencyError("split has no test rows; adjust [split]")

    from .forest import load_forest
    from .nn import load_checkpoint
    from .pipeline import FeModels
    test_scores: dict[str, np.ndarray] = {}
    if "FE" in present:
        out = io.out_dir / "train-rf"
        models = {}
        for p in sorted(out.glob("forest-*.json")):
            m = load_forest(p)
            models[p.stem.replace("forest-", "")] = m
        columns = next(iter(models.values())).column_ids
        fe = FeModels(task=cfg["task"], columns=columns, models=models)
        test_scores["FE"] = fe.predict(matrix, te)
    for exp, stage in (("DL", "train-dl"), ("FE+DL", "train-merged")):
        if exp not in present:
            continue
        ckpt_cfg, state, _meta = load_checkpoint(io.out_dir / stage
                                                 / "checkpoint.ecgn")
        from .nn import ResidualNet
        net = ResidualNet(ckpt_cfg, seed=0)
        net.load_state(state)
        merge_cols = None
        mc = io.out_dir / stage / "merge_columns.json"
        if mc.exists():
            merge_cols = json.loads(mc.read_text())
        test_scores[exp] = pipeline.dl_predict(net, dataset, matrix, te,
                                               merge_columns=merge_cols)

    report = pipeline.evaluate_experiments(
        cfg["task"], test_scores, targets[te],
        iters=cfg["evaluate"]["bootstrap_iters"], seed=cfg["seed"])
    out = io.stage_dir("evaluate")
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=1,
                                                default=float))
    outputs = [out / "report.json"]
    outputs += _write_curves(out, cfg["task"], test_scores, targets[te])
    io.finish("evaluate", fprint, outputs, t0)
    print(json.dumps(report.to_json()["experiments"], default=float)[:400])


def _write_curves(out: Path, task: str, scores: dict[str, np.ndarray],
                  targets: np.ndarray) -> list[Path]:
    """CSV curve exports per experiment (PR grids / ROC points / scatter)."""
    from .metrics import pr_curve_and_auprc
    from .io import ARRHYTHMIA_CLASSES
    written = []
    for exp, sc in scores.items():
        safe = exp.replace("+", "_")
        path = out / f"curves-{safe}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            if task == "diagnosis":
                fh.write("label,recall,precision\n")
                for j, lab in enumerate(ARRHYTHMIA_CLASSES):
                    curve = pr_curve_and_auprc(sc[:, j], targets[:, j])
                    for r, p in zip(curve.recall_grid, curve.precision_grid):
                        fh.write(f"{lab},{r:.6f},{p:.6f}\n")
            elif task == "risk":
                fh.write("threshold,se,one_minus_sp\n")
                order = np.argsort(-sc)
                y = targets[order]
                tp = np.cumsum(y)
                fp = np.cumsum(1 - y)
                for t, se, fpr in zip(sc[order], tp / max(y.sum(), 1),
                                      fp / max((1 - y).sum(), 1)):
                    fh.write(f"{t:.6f},{se:.6f},{fpr:.6f}\n")
            else:
                fh.write("truth,prediction\n")
                for t, p in zip(targets, sc):
                    fh.write(f"{t:.3f},{p:.3f}\n")
        written.append(path)
    return written


def cmd_learning_curve(io: StageIO) -> None:
    cfg = io.config
    io.require("extract")
    io.require("select")
    fprint = fingerprint({"extract": io.upstream_hash("extract"),
                          "select": io.upstream_hash("select"),
                          "learning_curve": cfg["learning_curve"],
                          "forest": cfg["forest"], "net": cfg["net"]})
    if io.is_cached("learning-curve", fprint):
        print("learning-curve: cache hit, skipping")
        return
    t0 = time.time()
    dataset = read_dataset(io.out_dir / "synth" / "manifest.jsonl")
    matrix = load_matrix(io.out_dir / "extract" / "matrix")
    targets = pipeline.targets_for(matrix, dataset, cfg["task"])
    selection = _load_selection(io)
    te = matrix.rows_for("test")
    tr = matrix.rows_for("train")
    metric = pipeline.headline_metric_fn(cfg["task"])
    kind = {"diagnosis": "AUPRC", "risk": "AUROC", "age": "R2"}[cfg["task"]]
    row_of = {rid: i for i, rid in enumerate(matrix.record_ids)}

    def strata_of(i: int):
        if cfg["task"] == "diagnosis":
            return tuple(targets[i].astype(int).tolist())
        if cfg["task"] == "risk":
            return int(targets[i])
        return int(targets[i] // 10)

    train_ids = [matrix.record_ids[i] for i in tr]
    strata = [strata_of(i) for i in tr]
    points = []
    for exp in cfg["learning_curve"]["experiments"]:
        def run(subset_ids: list[str], seed: int) -> MetricValue:
            rows = np.asarray([row_of[r] for r in subset_ids])
            sub = subset_matrix(matrix, rows, te)
            if exp == "FE":
                models = pipeline.train_fe(sub, targets[np.r_[rows, te]],
                                           cfg["task"], selection,
                                           _forest_config(cfg, seed_shift=seed))
                scores = models.predict(sub, sub.rows_for("test"))
            else:
                merge_cols = (sorted(selection.selected)
                              if exp == "FE+DL" else None)
                net_cfg = _net_config(cfg, len(merge_cols) if merge_cols else 0)
                sched = _schedule(cfg)
                sched = TrainSchedule(lr=sched.lr, batch_size=sched.batch_size,
                                      max_epochs=sched.max_epochs,
                                      seed=cfg["seed"] + seed)
                net, _state = pipeline.train_dl(dataset, sub,
                                                targets[np.r_[rows, te]],
                                                cfg["task"], net_cfg, sched,
                                                merge_columns=merge_cols)
                scores = pipeline.dl_predict(net, dataset, sub,
                                             sub.rows_for("test"),
                                             merge_columns=merge_cols)
            value = metric(scores, targets[te])
            return MetricValue(kind=kind, value=float(value), n=int(te.size))

        points += learning_curve(run, train_ids, strata,
                                 cfg["learning_curve"]["sizes"],
                                 cfg["learning_curve"]["seeds"], exp)
    out = io.stage_dir("learning-curve")
    path = out / "curve.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("experiment,train_size,seed,metric_kind,value,clipped,failed\n")
        for pt in points:
            val = "" if pt.metric is None else f"{pt.metric.value:.6f}"
            fh.write(f"{pt.experiment},{pt.train_size},{pt.seed},{kind},"
                     f"{val},{int(pt.clipped)},{int(pt.failed)}\n")
    io.finish("learning-curve", fprint, [path], t0)
    print(f"learning-curve: {len(points)} points -> {path}")




COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "select": cmd_select,
    "train-rf": cmd_train_rf,
    "train-dl": cmd_train_dl,
    "train-merged": cmd_train_merged,
    "evaluate": cmd_evaluate,
    "learning-curve": cmd_learning_curve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecgfusion",
        description="Three-branch (FE / DL / merged) 12-lead ECG experiments "
                    "on synthetic data")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config entry (section.key=value)")
    parser.add_argument("--out-dir", help="override the output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.out_dir:
            cfg["out_dir"] = args.out_dir
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    io = StageIO(Path(cfg["out_dir"]), cfg)
    try:
        COMMANDS[args.command](io)
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except Exception as exc:  # noqa: BLE001 - report, exit nonzero
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

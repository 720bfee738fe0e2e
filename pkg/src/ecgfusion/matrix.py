"""Feature-matrix assembly, train-statistics normalization, persistence.

The on-disk form reuses the planar float32 container of `ecgfusion.io`
(one "lead" = one column block), a JSON sidecar for ids/roles/statistics
and a packed-bit file for the missing mask.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .features import FeatureVector, extract_features
from .io import DatasetSplit, EcgDataset, read_signal, write_signal
from .registry import get_registry

WORKERS_ENV = "ECGFUSION_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class FeatureMatrix:
    """Rows of engineered features under one task view.

    ``roles`` assigns each row to train/validation/test; all statistics are
    computed on train rows only. ``missing`` is kept after imputation for
    audit.
    """

    record_ids: list[str]
    column_ids: list[str]
    values: np.ndarray        # (n_rows, n_cols) float64
    missing: np.ndarray       # bool, same shape
    roles: np.ndarray         # array of "train" | "validation" | "test"
    task_view: str | None
    registry_version: str
    train_median: np.ndarray | None = None
    train_mean: np.ndarray | None = None
    train_sd: np.ndarray | None = None
    normalized: bool = False
    all_missing_records: list[str] = field(default_factory=list)

    def validate(self) -> None:
        n, p = self.values.shape
        if len(self.record_ids) != n or len(self.column_ids) != p:
            raise ValueError("matrix shape does not match ids")
        if self.missing.shape != (n, p):
            raise ValueError("mask shape mismatch")
        if not np.isfinite(self.values[~self.missing]).all():
            raise ValueError("non-finite unmasked value")

    def rows_for(self, role: str) -> np.ndarray:
        return np.nonzero(self.roles == role)[0]

    def column_index(self, column_id: str) -> int:
        return self.column_ids.index(column_id)


_WORKER_DATASET: EcgDataset | None = None


def _worker_init(manifest_path: str) -> None:
    global _WORKER_DATASET
    _WORKER_DATASET = EcgDataset(manifest_path)


def _extract_one(record_id: str) -> tuple[str, np.ndarray, np.ndarray]:
    assert _WORKER_DATASET is not None
    fv = extract_features(_WORKER_DATASET.load(record_id))
    return record_id, fv.values, fv.missing


def assemble_matrix(dataset: EcgDataset, split: DatasetSplit,
                    task_view: str | None,
                    n_workers: int | None = None) -> FeatureMatrix:
    """Extract features for every record in the split, view-filtered.

    Rows are ordered train, validation, test (ids sorted within each part)
    so row roles are reproducible. Extraction is pure per record and can
    fan out over worker processes.
    """
    reg = get_registry()
    keep = reg.view_column_indices(task_view)
    ordered: list[tuple[str, str]] = []
    for part in ("train", "validation", "test"):
        ordered.extend((rid, part) for rid in sorted(getattr(split, part)))
    if not ordered:
        raise ValueError("split selects no records")

    n_workers = default_workers() if n_workers is None else max(1, n_workers)
    rows: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    if n_workers == 1:
        for rid, _ in ordered:
            fv = extract_features(dataset.load(rid))
            rows[rid] = (fv.values, fv.missing)
    else:
        with Pool(n_workers, initializer=_worker_init,
                  initargs=(str(dataset.manifest_path),)) as pool:
            for rid, vals, miss in pool.imap(
                    _extract_one, [rid for rid, _ in ordered], chunksize=16):
                rows[rid] = (vals, miss)

    values = np.stack([rows[rid][0] for rid, _ in ordered])[:, keep]
    missing = np.stack([rows[rid][1] for rid, _ in ordered])[:, keep]
    roles = np.array([part for _, part in ordered])
    record_ids = [rid for rid, _ in ordered]
    all_missing = [rid for i, rid in enumerate(record_ids) if missing[i].all()]

    matrix = FeatureMatrix(
        record_ids=record_ids,
        column_ids=[reg.column_ids[i] for i in keep],
        values=values, missing=missing, roles=roles,
        task_view=task_view, registry_version=reg.version,
        all_missing_records=all_missing,
    )
    attach_train_statistics(matrix)
    matrix.validate()
    return matrix


def matrix_from_vectors(vectors: list[FeatureVector], roles: list[str],
                        task_view: str | None) -> FeatureMatrix:
    """Build a matrix from already-extracted vectors (same row order)."""
    reg = get_registry()
    keep = reg.view_column_indices(task_view)
    values = np.stack([fv.values for fv in vectors])[:, keep]
    missing = np.stack([fv.missing for fv in vectors])[:, keep]
    matrix = FeatureMatrix(
        record_ids=[fv.record_id for fv in vectors],
        column_ids=[reg.column_ids[i] for i in keep],
        values=values, missing=missing, roles=np.array(roles),
        task_view=task_view, registry_version=reg.version,
        all_missing_records=[fv.record_id for fv in vectors if fv.missing.all()],
    )
    attach_train_statistics(matrix)
    matrix.validate()
    return matrix


def attach_train_statistics(matrix: FeatureMatrix) -> None:
    """Column medians over observed train cells, then mean/SD of the
    median-imputed train rows. SD uses the population convention."""
    tr = matrix.rows_for("train")
    if tr.size == 0:
        raise ValueError("matrix has no train rows")
    vals = matrix.values[tr]
    miss = matrix.missing[tr]
    n_cols = vals.shape[1]
    median = np.zeros(n_cols)
    for j in range(n_cols):
        col = vals[~miss[:, j], j]
        median[j] = float(np.median(col)) if col.size else 0.0
    imputed = np.where(miss, median[None, :], vals)
    matrix.train_median = median
    matrix.train_mean = imputed.mean(axis=0)
    matrix.train_sd = imputed.std(axis=0)


def impute_and_normalize(matrix: FeatureMatrix) -> FeatureMatrix:
    """Missing -> train median; then z-score with train mean/SD.

    Columns with zero train SD map to exactly 0. Returns a new matrix; the
    missing mask is preserved for audit.
    """
    if matrix.normalized:
        return matrix
    if matrix.train_median is None:
        attach_train_statistics(matrix)
    assert matrix.train_median is not None
    assert matrix.train_mean is not None and matrix.train_sd is not None
    filled = np.where(matrix.missing, matrix.train_median[None, :], matrix.values)
    sd = matrix.train_sd
    safe_sd = np.where(sd > 0, sd, 1.0)
    z = (filled - matrix.train_mean[None, :]) / safe_sd[None, :]
    z[:, sd == 0] = 0.0
    out = FeatureMatrix(
        record_ids=list(matrix.record_ids),
        column_ids=list(matrix.column_ids),
        values=z, missing=matrix.missing.copy(), roles=matrix.roles.copy(),
        task_view=matrix.task_view, registry_version=matrix.registry_version,
        train_median=matrix.train_median.copy(),
        train_mean=matrix.train_mean.copy(),
        train_sd=matrix.train_sd.copy(),
        normalized=True,
        all_missing_records=list(matrix.all_missing_records),
    )
    out.validate()
    return out


def subset_matrix(matrix: FeatureMatrix, train_rows: np.ndarray,
                  test_rows: np.ndarray) -> FeatureMatrix:
    """Matrix restricted to the given train/test rows.

    Normalization statistics carry over unchanged: learning-curve subsets
    deliberately keep the full-pool statistics fixed across sizes."""
    rows = np.r_[train_rows, test_rows]
    sub = FeatureMatrix(
        record_ids=[matrix.record_ids[i] for i in rows],
        column_ids=list(matrix.column_ids),
        values=matrix.values[rows],
        missing=matrix.missing[rows],
        roles=np.array(["train"] * len(train_rows) + ["test"] * len(test_rows)),
        task_view=matrix.task_view,
        registry_version=matrix.registry_version,
        train_median=matrix.train_median,
        train_mean=matrix.train_mean,
        train_sd=matrix.train_sd,
        normalized=matrix.normalized,
    )
    sub.validate()
    return sub


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_matrix(matrix: FeatureMatrix, prefix: Path | str) -> Path:
    """Write <prefix>.bin / .mask.bin / .json; returns the JSON path."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_signal(prefix.with_suffix(".bin"), matrix.values.T, 0.0)
    with open(prefix.with_suffix(".mask.bin"), "wb") as fh:
        fh.write(np.packbits(matrix.missing).tobytes())
    meta = {
        "format": "feature-matrix/1",
        "record_ids": matrix.record_ids,
        "column_ids": matrix.column_ids,
        "roles": matrix.roles.tolist(),
        "task_view": matrix.task_view,
        "registry_version": matrix.registry_version,
        "normalized": matrix.normalized,
        "all_missing_records": matrix.all_missing_records,
        "stats": None if matrix.train_median is None else {
            "median": matrix.train_median.tolist(),
            "mean": matrix.train_mean.tolist(),
            "sd": matrix.train_sd.tolist(),
        },
    }
    path = prefix.with_suffix(".json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh)
    return path


def load_matrix(prefix: Path | str) -> FeatureMatrix:
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format") != "feature-matrix/1":
        raise ValueError(f"{prefix}: not a feature matrix")
    cols_t, _fs = read_signal(prefix.with_suffix(".bin"))
    values = cols_t.T.astype(np.float64)
    n, p = values.shape
    with open(prefix.with_suffix(".mask.bin"), "rb") as fh:
        bits = np.frombuffer(fh.read(), dtype=np.uint8)
    missing = np.unpackbits(bits, count=n * p).astype(bool).reshape(n, p)
    stats = meta.get("stats")
    matrix = FeatureMatrix(
        record_ids=list(meta["record_ids"]),
        column_ids=list(meta["column_ids"]),
        values=values, missing=missing,
        roles=np.array(meta["roles"]),
        task_view=meta.get("task_view"),
        registry_version=meta.get("registry_version", "?"),
        train_median=None if stats is None else np.asarray(stats["median"]),
        train_mean=None if stats is None else np.asarray(stats["mean"]),
        train_sd=None if stats is None else np.asarray(stats["sd"]),
        normalized=bool(meta.get("normalized", False)),
        all_missing_records=list(meta.get("all_missing_records", [])),
    )
    matrix.validate()
    return matrix

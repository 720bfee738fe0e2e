"""12-lead ECG record model and the on-disk dataset container.

A dataset on disk is a directory holding one binary signal file per record
plus a JSON-lines manifest. The signal format is deliberately minimal:

* 16-byte header, little-endian: magic ``b"ECG1"`` (4 bytes), ``u32`` lead
  count, ``u32`` samples per lead, ``f32`` sampling rate in Hz.
* payload: planar float32, lead 0 in full, then lead 1, and so on.

The manifest starts with one header object (``{"format": "ecg-manifest/1",
"count": N}``) followed by one JSON object per record (id, signal path,
labels, meta). Missing labels and meta values are explicit ``null``, never
sentinel numbers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

LEAD_ORDER = ("I", "II", "III", "aVR", "aVL", "aVF",
              "V1", "V2", "V3", "V4", "V5", "V6")
N_LEADS = 12
TARGET_FS_HZ = 400.0

ARRHYTHMIA_CLASSES = ("1dAVb", "RBBB", "LBBB", "SB", "AF", "ST")

META_KEYS = ("age", "sex") + tuple(f"meta_{i:02d}" for i in range(1, 15))

_MAGIC = b"ECG1"
_HEADER = struct.Struct("<4sIIf")
_MANIFEST_FORMAT = "ecg-manifest/1"


class DatasetError(Exception):
    """Malformed dataset container (manifest, signal file or labels)."""


@dataclass(frozen=True)
class SignalSpec:
    """Sampling metadata of one record."""

    sampling_rate_hz: float
    n_samples: int
    n_leads: int = N_LEADS
    lead_order: tuple[str, ...] = LEAD_ORDER

    def validate(self) -> None:
        if self.n_leads != N_LEADS:
            raise ValueError(f"expected {N_LEADS} leads, got {self.n_leads}")
        if not self.sampling_rate_hz > 0:
            raise ValueError("sampling rate must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        # 7-10 s applies to the canonical 400 Hz form only.
        if self.sampling_rate_hz == TARGET_FS_HZ and not (2800 <= self.n_samples <= 4000):
            raise ValueError(
                f"400 Hz records must hold 2800..4000 samples, got {self.n_samples}")
        if tuple(self.lead_order) != LEAD_ORDER:
            raise ValueError("non-standard lead order")

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate_hz


@dataclass(frozen=True)
class TaskLabels:
    """Per-record targets for the three tasks; absent groups are None.

    ``arrhythmia`` maps each of the six class names to a bool. ``af_risk``
    is True for future-AF records. ``age_years`` lies in [16, 85].
    """

    arrhythmia: dict[str, bool] | None = None
    af_risk: bool | None = None
    age_years: float | None = None

    def validate(self) -> None:
        if self.arrhythmia is None and self.af_risk is None and self.age_years is None:
            raise ValueError("at least one label group must be present")
        if self.arrhythmia is not None:
            if set(self.arrhythmia) != set(ARRHYTHMIA_CLASSES):
                raise ValueError("arrhythmia labels must cover exactly the six classes")
        if self.age_years is not None and not (16.0 <= self.age_years <= 85.0):
            raise ValueError(f"age {self.age_years} outside [16, 85]")

    def arrhythmia_vector(self) -> np.ndarray:
        if self.arrhythmia is None:
            raise ValueError("record has no arrhythmia labels")
        return np.array([bool(self.arrhythmia[c]) for c in ARRHYTHMIA_CLASSES], dtype=bool)

    def to_json(self) -> dict:
        return {
            "arrhythmia": ({c: bool(v) for c, v in self.arrhythmia.items()}
                           if self.arrhythmia is not None else None),
            "af_risk": self.af_risk,
            "age_years": self.age_years,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TaskLabels":
        arr = obj.get("arrhythmia")
        lab = cls(
            arrhythmia=({str(k): bool(v) for k, v in arr.items()} if arr is not None else None),
            af_risk=obj.get("af_risk"),
            age_years=obj.get("age_years"),
        )
        lab.validate()
        return lab


@dataclass(frozen=True)
class MetaFields:
    """The 16 self-reported clinical variables.

    Age and sex are named; the remaining 14 slots are generic binary flags
    (``meta_01`` .. ``meta_14``). Every slot may be None (missing).
    """

    age: float | None = None
    sex: int | None = None
    flags: tuple[int | None, ...] = (None,) * 14

    def validate(self) -> None:
        if len(self.flags) != 14:
            raise ValueError("exactly 14 generic meta flags required")
        for f in self.flags:
            if f is not None and f not in (0, 1):
                raise ValueError("meta flags must be binary or None")
        if self.sex is not None and self.sex not in (0, 1):
            raise ValueError("sex must be 0/1 or None")

    def as_dict(self) -> dict[str, float | int | None]:
        out: dict[str, float | int | None] = {"age": self.age, "sex": self.sex}
        for i, f in enumerate(self.flags, start=1):
            out[f"meta_{i:02d}"] = f
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MetaFields":
        flags = tuple(obj.get(f"meta_{i:02d}") for i in range(1, 15))
        meta = cls(age=obj.get("age"), sex=obj.get("sex"), flags=flags)
        meta.validate()
        return meta


@dataclass
class EcgRecord:
    """One 12-lead waveform (millivolts) with labels and meta."""

    record_id: str
    spec: SignalSpec
    samples: np.ndarray  # float32, shape (12, n_samples)
    labels: TaskLabels
    meta: MetaFields = field(default_factory=MetaFields)

    def validate(self) -> None:
        self.spec.validate()
        self.labels.validate()
        self.meta.validate()
        if self.samples.shape != (self.spec.n_leads, self.spec.n_samples):
            raise ValueError(
                f"sample matrix {self.samples.shape} does not match spec "
                f"({self.spec.n_leads}, {self.spec.n_samples})")
        if not np.isfinite(self.samples).all():
            raise ValueError("non-finite sample values")


def write_signal(path: Path | str, samples: np.ndarray, fs: float) -> None:
    """Write one planar float32 signal file (see module docstring)."""
    samples = np.ascontiguousarray(samples, dtype="<f4")
    if samples.ndim != 2:
        raise ValueError("samples must be 2-D (leads, samples)")
    n_leads, n_samples = samples.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, n_leads, n_samples, fs))
        fh.write(samples.tobytes(order="C"))


def read_signal(path: Path | str) -> tuple[np.ndarray, float]:
    """Read a signal file, returning (samples float32 (leads, n), fs)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise DatasetError(f"{path}: truncated header")
        magic, n_leads, n_samples, fs = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise DatasetError(f"{path}: bad magic {magic!r}")
        payload = fh.read(4 * n_leads * n_samples)
    if len(payload) != 4 * n_leads * n_samples:
        raise DatasetError(f"{path}: payload shorter than header promises")
    samples = np.frombuffer(payload, dtype="<f4").reshape(n_leads, n_samples)
    return samples.copy(), float(fs)


class EcgDataset:
    """Lazy reader over a written dataset: manifest index + on-demand signals.

    Records are immutable once loaded; iteration from several workers is
    safe because every read opens its own file handle.
    """

    def __init__(self, manifest_path: Path | str):
        self.manifest_path = Path(manifest_path)
        self.root = self.manifest_path.parent
        self._entries: list[dict] = []
        self._by_id: dict[str, int] = {}
        self._parse()

    def _parse(self) -> None:
        if not self.manifest_path.exists():
            raise DatasetError(f"manifest not found: {self.manifest_path}")
        with open(self.manifest_path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise DatasetError(f"{self.manifest_path}: empty file (missing header line)")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{self.manifest_path}:1: bad header: {exc}") from exc
        if header.get("format") != _MANIFEST_FORMAT:
            raise DatasetError(f"{self.manifest_path}: unknown manifest format "
                               f"{header.get('format')!r}")
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entry = {
                    "id": str(obj["id"]),
                    "signal": str(obj["signal"]),
                    "labels": TaskLabels.from_json(obj["labels"]),
                    "meta": MetaFields.from_json(obj.get("meta", {})),
                }
            except (KeyError, ValueError, TypeError) as exc:
                raise DatasetError(
                    f"{self.manifest_path}:{lineno}: malformed record line: {exc}") from exc
            if entry["id"] in self._by_id:
                raise DatasetError(
                    f"{self.manifest_path}:{lineno}: duplicate record_id {entry['id']!r}")
            sig = self.root / entry["signal"]
            if not sig.exists():
                raise DatasetError(
                    f"{self.manifest_path}:{lineno}: missing signal file {sig}")
            self._by_id[entry["id"]] = len(self._entries)
            self._entries.append(entry)
        declared = header.get("count")
        if declared is not None and declared != len(self._entries):
            raise DatasetError(
                f"{self.manifest_path}: header count {declared} != "
                f"{len(self._entries)} record lines")

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def record_ids(self) -> list[str]:
        return [e["id"] for e in self._entries]

    def labels_of(self, record_id: str) -> TaskLabels:
        return self._entries[self._by_id[record_id]]["labels"]

    def meta_of(self, record_id: str) -> MetaFields:
        return self._entries[self._by_id[record_id]]["meta"]

    def load(self, record_id: str) -> EcgRecord:
        if record_id not in self._by_id:
            raise KeyError(record_id)
        entry = self._entries[self._by_id[record_id]]
        samples, fs = read_signal(self.root / entry["signal"])
        n_leads, n_samples = samples.shape
        rec = EcgRecord(
            record_id=entry["id"],
            spec=SignalSpec(sampling_rate_hz=fs, n_samples=n_samples, n_leads=n_leads),
            samples=samples,
            labels=entry["labels"],
            meta=entry["meta"],
        )
        rec.validate()
        return rec

    def __iter__(self) -> Iterator[EcgRecord]:
        for rid in self.record_ids:
            yield self.load(rid)


def write_dataset(records: Sequence[EcgRecord], out_dir: Path | str) -> Path:
    """Write records + manifest under ``out_dir``; returns the manifest path.

    Inverse of :func:`read_dataset` up to bit-exact sample equality.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "signals").mkdir(exist_ok=True)

    seen: set[str] = set()
    for rec in records:
        if rec.record_id in seen:
            raise DatasetError(f"duplicate record_id {rec.record_id!r}")
        seen.add(rec.record_id)

    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": _MANIFEST_FORMAT, "count": len(records)}) + "\n")
        for rec in records:
            rec.validate()
            rel = f"signals/{rec.record_id}.ecg"
            write_signal(out_dir / rel, rec.samples, rec.spec.sampling_rate_hz)
            fh.write(json.dumps({
                "id": rec.record_id,
                "signal": rel,
                "labels": rec.labels.to_json(),
                "meta": rec.meta.as_dict(),
            }) + "\n")
    return manifest


def read_dataset(manifest_path: Path | str) -> EcgDataset:
    """Open a dataset for lazy iteration; validates the manifest eagerly."""
    return EcgDataset(manifest_path)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPolicy:
    """Ratios (summing to <= 1; remainder left unassigned) + stratification.

    ``stratify_by`` is None, one of the named keys ("arrhythmia", "af_risk"),
    or a callable mapping a TaskLabels to a hashable stratum.
    """

    train: float
    validation: float = 0.0
    test: float = 0.0
    stratify_by: str | Callable[[TaskLabels], object] | None = None
    name: str = "custom"

    def ratios(self) -> dict[str, float]:
        return {"train": self.train, "validation": self.validation, "test": self.test}

    def validate(self) -> None:
        r = self.ratios()
        if any(v < 0 for v in r.values()):
            raise ValueError("split ratios must be non-negative")
        if sum(r.values()) > 1.0 + 1e-9:
            raise ValueError("split ratios must sum to <= 1")

    def stratum_fn(self) -> Callable[[TaskLabels], object]:
        key = self.stratify_by
        if key is None:
            return lambda labels: 0
        if callable(key):
            return key
        if key == "arrhythmia":
            return lambda labels: tuple(labels.arrhythmia_vector().tolist())
        if key == "af_risk":
            return lambda labels: bool(labels.af_risk)
        raise ValueError(f"unknown stratification key {key!r}")


@dataclass(frozen=True)
class DatasetSplit:
    train: frozenset[str]
    validation: frozenset[str]
    test: frozenset[str]
    policy: SplitPolicy

    def validate(self) -> None:
        parts = [self.train, self.validation, self.test]
        total = sum(len(p) for p in parts)
        union = self.train | self.validation | self.test
        if len(union) != total:
            raise ValueError("split parts are not pairwise disjoint")

    def part_of(self, record_id: str) -> str | None:
        if record_id in self.train:
            return "train"
        if record_id in self.validation:
            return "validation"
        if record_id in self.test:
            return "test"
        return None


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of n items over the given ratios."""
    exact = [n * r for r in ratios]
    base = [int(np.floor(e)) for e in exact]
    short = int(round(sum(exact))) - sum(base)
    remainders = sorted(range(len(ratios)), key=lambda i: (exact[i] - base[i], -i),
                        reverse=True)
    for i in remainders[:short]:
        base[i] += 1
    return base


# Clinical-scale reference policies, documented for provenance; desk-scale
# runs use much smaller synthetic corpora with the same machinery. The
# diagnosis corpus splits 98/2 train/validation with an expert-annotated
# test set; the risk corpus splits 80/20 train/test with 2% of train as
# validation; the age corpus splits 80/5 with an external test cohort.
REFERENCE_SPLIT_POLICIES = {
    "diagnosis": SplitPolicy(train=0.98, validation=0.02,
                             stratify_by="arrhythmia",
                             name="reference-diagnosis-98-2"),
    "risk": SplitPolicy(train=0.784, validation=0.016, test=0.2,
                        stratify_by="af_risk", name="reference-risk-80-20"),
    "age": SplitPolicy(train=0.80 / 0.85, validation=0.05 / 0.85,
                       name="reference-age-80-5"),
}


def make_split(dataset: EcgDataset, policy: SplitPolicy, seed: int) -> DatasetSplit:
    """Deterministic (shuffled under ``seed``) stratified split.

    Within every stratum the per-part counts follow largest-remainder
    apportionment, so stratified class proportions hold to +/- 1 record.
    """
    policy.validate()
    stratum_of = policy.stratum_fn()
    strata: dict[object, list[str]] = {}
    for rid in dataset.record_ids:
        strata.setdefault(stratum_of(dataset.labels_of(rid)), []).append(rid)

    part_names = ["train", "validation", "test"]
    ratios = [policy.ratios()[p] for p in part_names]
    n_parts = sum(1 for r in ratios if r > 0)
    rng = np.random.default_rng(seed)
    assigned: dict[str, list[str]] = {p: [] for p in part_names}
    for key in sorted(strata, key=repr):
        ids = sorted(strata[key])
        if len(ids) < n_parts:
            raise ValueError(
                f"stratum {key!r} has {len(ids)} records, fewer than the "
                f"{n_parts} split parts")
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        counts = _apportion(len(ids), ratios)
        start = 0
        for part, cnt in zip(part_names, counts):
            assigned[part].extend(shuffled[start:start + cnt])
            start += cnt

    split = DatasetSplit(
        train=frozenset(assigned["train"]),
        validation=frozenset(assigned["validation"]),
        test=frozenset(assigned["test"]),
        policy=policy,
    )
    split.validate()
    return split

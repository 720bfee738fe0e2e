"""Parametric 12-lead ECG generator with planted, testable structure.

Each beat is a sum of five Gaussians (P, Q, R, S, T) so that every fiducial
quantity (PR distance, QRS span, wave amplitudes, beat times) is known
analytically and can serve as an oracle for detectors and morphology
features. Class-conditional parameter rules plant the label structure:

* SB -> mean heart rate < 50 bpm, ST -> > 100 bpm
* AF -> no P wave and RR-interval SD >= 150 ms
* 1dAVb -> PR (P-center to R-center) >= 220 ms
* RBBB / LBBB -> QRS width scale >= 1.5 with lead-asymmetric QRS gains
* risk task -> "future AF" records carry intermediate RR irregularity and
  shortened P waves (latent; no overt AF)
* age task -> heart rate drifts -0.15 bpm/year and T amplitude -0.5%/year
  from an age-40 baseline, both with additive noise
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .io import (ARRHYTHMIA_CLASSES, N_LEADS, TARGET_FS_HZ, EcgRecord,
                 MetaFields, SignalSpec, TaskLabels, write_dataset)

TASKS = ("diagnosis", "risk", "age")

# Overall per-lead projection of the beat template (dimensionless gains).
LEAD_GAIN = (0.55, 1.00, 0.45, -0.85, 0.25, 0.65,
             -0.35, 0.45, 0.70, 0.90, 1.00, 0.85)

# Extra gain applied to the QRS waves only; the asymmetry across leads is
# what distinguishes the two bundle-branch blocks.
RBBB_QRS_GAIN = (0.80, 0.90, 1.00, 1.00, 1.00, 1.00,
                 1.90, 1.60, 1.30, 1.00, 0.85, 0.80)
LBBB_QRS_GAIN = (1.80, 1.10, 0.80, 1.00, 1.60, 0.90,
                 0.70, 0.75, 1.00, 1.20, 1.70, 1.80)

# Age-task drift laws (per year away from the age-40 baseline).
AGE_HR_BASELINE_BPM = 70.0
AGE_HR_DRIFT_BPM_PER_YEAR = -0.15
AGE_HR_NOISE_BPM = 1.5
AGE_T_BASELINE_MV = 0.30
AGE_T_DRIFT_PER_YEAR = -0.005
AGE_T_NOISE_MV = 0.012

_QRS_NOMINAL_MS = 80.0


class GenerationError(ValueError):
    """Contradictory or invalid generation request."""


@dataclass(frozen=True)
class WaveParams:
    amplitude_mv: float
    center_ms: float  # relative to the R center
    width_ms: float   # gaussian sigma

    def validate(self) -> None:
        if not self.width_ms > 0:
            raise GenerationError("wave width must be positive")


@dataclass(frozen=True)
class BeatTemplateParams:
    """Sum-of-Gaussians beat shape plus its per-lead projections."""

    waves: dict[str, WaveParams]
    lead_gain: tuple[float, ...] = LEAD_GAIN
    qrs_lead_gain: tuple[float, ...] = (1.0,) * N_LEADS
    pr_ms: float = 160.0           # P-center-to-R-center distance
    qrs_width_ms: float = _QRS_NOMINAL_MS

    def validate(self) -> None:
        for w in self.waves.values():
            w.validate()
        if len(self.lead_gain) != N_LEADS or len(self.qrs_lead_gain) != N_LEADS:
            raise GenerationError("need 12 per-lead gains")
        r = self.waves["R"].amplitude_mv
        per_lead_r = r * np.asarray(self.lead_gain) * np.asarray(self.qrs_lead_gain)
        if not (per_lead_r > 0).any():
            raise GenerationError("R amplitude must be positive in at least one lead")


@dataclass(frozen=True)
class RhythmParams:
    mean_hr_bpm: float
    rr_sd_ms: float
    rhythm: str = "sinus"  # "sinus" | "af_like"

    def validate(self) -> None:
        if not 30.0 <= self.mean_hr_bpm <= 220.0:
            raise GenerationError(f"heart rate {self.mean_hr_bpm} outside [30, 220]")
        if self.rhythm not in ("sinus", "af_like"):
            raise GenerationError(f"unknown rhythm {self.rhythm!r}")
        if self.rhythm == "af_like" and self.rr_sd_ms < 150.0:
            raise GenerationError("af_like rhythm requires RR SD >= 150 ms")


@dataclass(frozen=True)
class GenSpec:
    """One generation request; (spec, seed) fully determines the record."""

    task: str
    arrhythmias: tuple[str, ...] = ()
    af_risk: bool | None = None
    age_years: float | None = None
    duration_s: float | None = None   # None: drawn uniformly from [7, 10]
    noise_sd_mv: float = 0.02
    seed: int = 0

    def validate(self) -> None:
        if self.task not in TASKS:
            raise GenerationError(f"unknown task {self.task!r}")
        for a in self.arrhythmias:
            if a not in ARRHYTHMIA_CLASSES:
                raise GenerationError(f"unknown arrhythmia {a!r}")
        labs = set(self.arrhythmias)
        if {"SB", "ST"} <= labs:
            raise GenerationError("SB and ST are contradictory (HR rules conflict)")
        if {"RBBB", "LBBB"} <= labs:
            raise GenerationError("RBBB and LBBB are contradictory")
        if "AF" in labs and labs & {"SB", "ST", "1dAVb"}:
            raise GenerationError("AF is incompatible with sinus-rate and PR rules")
        if self.task == "risk" and self.af_risk is None:
            raise GenerationError("risk task requires af_risk")
        if self.task == "age" and self.age_years is None:
            raise GenerationError("age task requires age_years")
        if self.age_years is not None and not 16.0 <= self.age_years <= 85.0:
            raise GenerationError("age outside [16, 85]")
        if self.duration_s is not None and not 7.0 <= self.duration_s <= 10.0:
            raise GenerationError("duration outside [7, 10] s")
        if self.noise_sd_mv < 0:
            raise GenerationError("noise SD must be >= 0")


@dataclass
class GroundTruth:
    """All generating parameters of one record, for use as test oracles."""

    record_id: str
    task: str
    arrhythmias: tuple[str, ...]
    af_risk: bool | None
    age_years: float | None
    mean_hr_bpm: float
    rr_sd_ms: float
    rhythm: str
    pr_ms: float
    qrs_width_ms: float
    qrs_gain_pattern: str  # "uniform" | "rbbb" | "lbbb"
    p_amplitude_mv: float
    r_amplitude_mv: float
    t_amplitude_mv: float
    beat_times_ms: list[float] = field(default_factory=list)
    noise_sd_mv: float = 0.0
    duration_s: float = 0.0
    seed: int = 0

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["arrhythmias"] = list(self.arrhythmias)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        obj = dict(obj)
        obj["arrhythmias"] = tuple(obj.get("arrhythmias", ()))
        return cls(**obj)


def _draw_template(spec: GenSpec, rng: np.random.Generator) -> tuple[BeatTemplateParams, RhythmParams]:
    labs = set(spec.arrhythmias)

    # Rate and rhythm.
    if "AF" in labs:
        hr = float(rng.uniform(70.0, 130.0))
        rr_sd = float(rng.uniform(155.0, 220.0))
        rhythm = "af_like"
    else:
        if "SB" in labs:
            hr = float(rng.uniform(36.0, 49.0))
        elif "ST" in labs:
            hr = float(rng.uniform(104.0, 158.0))
        else:
            hr = float(rng.uniform(60.0, 95.0))
        rr_sd = float(rng.uniform(10.0, 40.0))
        rhythm = "sinus"

    # PR distance.
    if "1dAVb" in labs:
        pr = float(rng.uniform(225.0, 300.0))
    else:
        pr = float(rng.uniform(130.0, 200.0))

    # QRS width.
    if labs & {"RBBB", "LBBB"}:
        width_scale = float(rng.uniform(1.5, 1.95))
    else:
        width_scale = float(rng.uniform(0.85, 1.15))
    w = _QRS_NOMINAL_MS * width_scale

    qrs_gain: tuple[float, ...] = (1.0,) * N_LEADS
    if "RBBB" in labs:
        qrs_gain = RBBB_QRS_GAIN
    elif "LBBB" in labs:
        qrs_gain = LBBB_QRS_GAIN

    r_amp = float(rng.uniform(0.8, 1.2))
    p_amp = float(rng.uniform(0.13, 0.19))
    p_width = float(rng.uniform(20.0, 26.0))
    t_amp = AGE_T_BASELINE_MV * float(rng.uniform(0.85, 1.15))

    # Risk task: latent "future AF" signature, deliberately weaker than the
    # overt diagnosis signals (overlapping ranges keep the Bayes rate well
    # below 1 so learning curves show real growth).
    if spec.task == "risk":
        if spec.af_risk:
            rr_sd = float(rng.uniform(35.0, 95.0))
            p_amp *= float(rng.uniform(0.55, 0.95))
            p_width *= float(rng.uniform(0.65, 1.00))
        else:
            rr_sd = float(rng.uniform(15.0, 65.0))
            p_amp *= float(rng.uniform(0.75, 1.15))

    # Age task: drift laws plus noise; the drawn values are the ground truth
    # an oracle regression may use.
    if spec.task == "age":
        da = spec.age_years - 40.0
        hr = AGE_HR_BASELINE_BPM + AGE_HR_DRIFT_BPM_PER_YEAR * da \
            + float(rng.normal(0.0, AGE_HR_NOISE_BPM))
        hr = float(np.clip(hr, 35.0, 180.0))
        t_amp = AGE_T_BASELINE_MV * (1.0 + AGE_T_DRIFT_PER_YEAR * da) \
            + float(rng.normal(0.0, AGE_T_NOISE_MV))
        t_amp = float(max(t_amp, 0.05))

    if rhythm == "af_like":
        p_amp = 0.0

    rr_mean_ms = 60000.0 / hr
    t_center = float(np.clip(0.40 * rr_mean_ms, 150.0, 320.0))
    t_width = float(np.clip(0.09 * rr_mean_ms, 30.0, 55.0))

    waves = {
        "P": WaveParams(p_amp, -pr, p_width),
        "Q": WaveParams(-0.15 * r_amp, -0.33 * w, w / 10.0),
        "R": WaveParams(r_amp, 0.0, w / 8.0),
        "S": WaveParams(-0.25 * r_amp, 0.33 * w, w / 10.0),
        "T": WaveParams(t_amp, t_center, t_width),
    }
    template = BeatTemplateParams(waves=waves, qrs_lead_gain=qrs_gain,
                                  pr_ms=pr, qrs_width_ms=w)
    rhythm_params = RhythmParams(mean_hr_bpm=hr, rr_sd_ms=rr_sd, rhythm=rhythm)
    template.validate()
    rhythm_params.validate()
    return template, rhythm_params


def _beat_times_s(rhythm: RhythmParams, duration_s: float,
                  rng: np.random.Generator) -> np.ndarray:
    rr_mean = 60.0 / rhythm.mean_hr_bpm
    t = float(rng.uniform(0.25, 0.25 + rr_mean))
    times = []
    while t < duration_s + 1.0:
        times.append(t)
        rr = rr_mean + rng.normal(0.0, rhythm.rr_sd_ms / 1000.0)
        t += float(max(rr, 0.28))
    return np.asarray(times)


def _render(template: BeatTemplateParams, beat_times_s: np.ndarray,
            n_samples: int, fs: float, noise_sd: float,
            rng: np.random.Generator) -> np.ndarray:
    """Evaluate the analytic waveform on the sample grid, then add noise."""
    t_grid = np.arange(n_samples) / fs
    base_pt = np.zeros(n_samples)
    base_qrs = np.zeros(n_samples)
    for tb in beat_times_s:
        for name, wave in template.waves.items():
            if wave.amplitude_mv == 0.0:
                continue
            c = tb + wave.center_ms / 1000.0
            s = wave.width_ms / 1000.0
            lo = max(0, int(np.floor((c - 4.5 * s) * fs)))
            hi = min(n_samples, int(np.ceil((c + 4.5 * s) * fs)) + 1)
            if hi <= lo:
                continue
            seg = t_grid[lo:hi]
            bump = wave.amplitude_mv * np.exp(-0.5 * ((seg - c) / s) ** 2)
            if name in ("Q", "R", "S"):
                base_qrs[lo:hi] += bump
            else:
                base_pt[lo:hi] += bump

    gain = np.asarray(template.lead_gain)
    qrs_gain = np.asarray(template.qrs_lead_gain)
    samples = gain[:, None] * base_pt[None, :] \
        + (gain * qrs_gain)[:, None] * base_qrs[None, :]

    if noise_sd > 0:
        # Baseline wander (below the 0.5 Hz denoise cut) + white noise.
        bw_amp = rng.uniform(0.0, 3.0 * noise_sd)
        bw_freq = rng.uniform(0.15, 0.35)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=N_LEADS)
        samples = samples + bw_amp * np.sin(
            2.0 * np.pi * bw_freq * t_grid[None, :] + phases[:, None])
        samples = samples + rng.normal(0.0, noise_sd, size=samples.shape)
    return samples.astype(np.float32)


def _labels_for(spec: GenSpec) -> TaskLabels:
    if spec.task == "diagnosis":
        return TaskLabels(arrhythmia={c: c in spec.arrhythmias
                                      for c in ARRHYTHMIA_CLASSES})
    if spec.task == "risk":
        return TaskLabels(af_risk=bool(spec.af_risk))
    return TaskLabels(age_years=float(spec.age_years))


def _meta_for(spec: GenSpec, rng: np.random.Generator) -> MetaFields:
    # Self-reported variables: uninformative for the planted signals, with a
    # sprinkling of missing values so imputation is exercised.
    age = spec.age_years if spec.task == "age" else float(rng.uniform(20.0, 80.0))
    sex = int(rng.integers(0, 2))
    flags = tuple(None if rng.random() < 0.1 else int(rng.integers(0, 2))
                  for _ in range(14))
    return MetaFields(age=round(float(age), 1), sex=sex, flags=flags)


def generate_record(spec: GenSpec, record_id: str = "rec-0") -> tuple[EcgRecord, GroundTruth]:
    """Generate one record; bit-identical for identical (spec, record_id)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    template, rhythm = _draw_template(spec, rng)
    duration = spec.duration_s if spec.duration_s is not None \
        else float(rng.uniform(7.0, 10.0))
    n_samples = int(round(duration * TARGET_FS_HZ))
    beat_times = _beat_times_s(rhythm, duration, rng)
    meta = _meta_for(spec, rng)
    samples = _render(template, beat_times, n_samples, TARGET_FS_HZ,
                      spec.noise_sd_mv, rng)

    record = EcgRecord(
        record_id=record_id,
        spec=SignalSpec(sampling_rate_hz=TARGET_FS_HZ, n_samples=n_samples),
        samples=samples,
        labels=_labels_for(spec),
        meta=meta,
    )
    record.validate()

    in_range = beat_times[(beat_times >= 0) & (beat_times < duration)]
    truth = GroundTruth(
        record_id=record_id,
        task=spec.task,
        arrhythmias=spec.arrhythmias,
        af_risk=spec.af_risk,
        age_years=spec.age_years,
        mean_hr_bpm=rhythm.mean_hr_bpm,
        rr_sd_ms=rhythm.rr_sd_ms,
        rhythm=rhythm.rhythm,
        pr_ms=template.pr_ms,
        qrs_width_ms=template.qrs_width_ms,
        qrs_gain_pattern=("rbbb" if template.qrs_lead_gain == RBBB_QRS_GAIN
                          else "lbbb" if template.qrs_lead_gain == LBBB_QRS_GAIN
                          else "uniform"),
        p_amplitude_mv=template.waves["P"].amplitude_mv,
        r_amplitude_mv=template.waves["R"].amplitude_mv,
        t_amplitude_mv=template.waves["T"].amplitude_mv,
        beat_times_ms=[round(float(t) * 1000.0, 6) for t in in_range],
        noise_sd_mv=spec.noise_sd_mv,
        duration_s=duration,
        seed=spec.seed,
    )
    return record, truth


def verify_ground_truth(truth: GroundTruth, labels: TaskLabels) -> list[str]:
    """Re-derive labels from the stored parameters; returns rule violations."""
    problems = []
    if truth.task == "diagnosis":
        derived = {
            "SB": truth.rhythm == "sinus" and truth.mean_hr_bpm < 50.0,
            "ST": truth.rhythm == "sinus" and truth.mean_hr_bpm > 100.0,
            "AF": truth.rhythm == "af_like",
            "1dAVb": truth.rhythm == "sinus" and truth.pr_ms >= 220.0,
        }
        wide = truth.qrs_width_ms >= 1.5 * _QRS_NOMINAL_MS
        derived["RBBB"] = wide and truth.qrs_gain_pattern == "rbbb"
        derived["LBBB"] = wide and truth.qrs_gain_pattern == "lbbb"
        assert labels.arrhythmia is not None
        for cls in ARRHYTHMIA_CLASSES:
            if bool(labels.arrhythmia[cls]) != derived[cls]:
                problems.append(f"label {cls} inconsistent with parameters")
    elif truth.task == "risk":
        if labels.af_risk != truth.af_risk:
            problems.append("af_risk label mismatch")
        if truth.af_risk and truth.rhythm == "af_like":
            problems.append("future-AF record must not show overt AF")
    else:
        if labels.age_years != truth.age_years:
            problems.append("age label mismatch")
    return problems


# ---------------------------------------------------------------------------
# Dataset-level generation
# ---------------------------------------------------------------------------

def _spec_seeds(master_seed: int, n: int) -> list[int]:
    rng = np.random.default_rng(master_seed)
    return [int(s) for s in rng.integers(0, 2 ** 62, size=n)]


def generate_diagnosis_dataset(n_per_class: int, seed: int,
                               noise_sd_mv: float = 0.02,
                               ) -> tuple[list[EcgRecord], list[GroundTruth]]:
    """Balanced single-label diagnosis set: n per arrhythmia plus n NSR."""
    compositions: list[tuple[str, ...]] = [()] + [(c,) for c in ARRHYTHMIA_CLASSES]
    n_total = n_per_class * len(compositions)
    seeds = _spec_seeds(seed, n_total)
    records, truths = [], []
    i = 0
    for comp in compositions:
        for _ in range(n_per_class):
            spec = GenSpec(task="diagnosis", arrhythmias=comp,
                           noise_sd_mv=noise_sd_mv, seed=seeds[i])
            rid = f"dx-{'-'.join(comp) if comp else 'NSR'}-{i:06d}"
            rec, gt = generate_record(spec, rid)
            records.append(rec)
            truths.append(gt)
            i += 1
    return records, truths


def generate_risk_dataset(n: int, positive_fraction: float, seed: int,
                          noise_sd_mv: float = 0.02,
                          ) -> tuple[list[EcgRecord], list[GroundTruth]]:
    """Binary risk set with an exact positive count of round(n * fraction)."""
    n_pos = int(round(n * positive_fraction))
    seeds = _spec_seeds(seed, n)
    records, truths = [], []
    for i in range(n):
        positive = i < n_pos
        spec = GenSpec(task="risk", af_risk=positive,
                       noise_sd_mv=noise_sd_mv, seed=seeds[i])
        rec, gt = generate_record(spec, f"risk-{i:06d}")
        records.append(rec)
        truths.append(gt)
    return records, truths


def generate_age_dataset(n: int, seed: int, age_range: tuple[float, float] = (16.0, 85.0),
                         noise_sd_mv: float = 0.02,
                         ) -> tuple[list[EcgRecord], list[GroundTruth]]:
    """Regression set with ages drawn uniformly from ``age_range``."""
    rng = np.random.default_rng(seed)
    ages = rng.uniform(age_range[0], age_range[1], size=n)
    seeds = _spec_seeds(seed + 1, n)
    records, truths = [], []
    for i in range(n):
        spec = GenSpec(task="age", age_years=round(float(ages[i]), 3),
                       noise_sd_mv=noise_sd_mv, seed=seeds[i])
        rec, gt = generate_record(spec, f"age-{i:06d}")
        records.append(rec)
        truths.append(gt)
    return records, truths


def write_ground_truth(truths: Sequence[GroundTruth], path: Path | str) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for gt in truths:
            fh.write(json.dumps(gt.to_json()) + "\n")
    return path


def read_ground_truth(path: Path | str) -> list[GroundTruth]:
    with open(path, "r", encoding="utf-8") as fh:
        return [GroundTruth.from_json(json.loads(line))
                for line in fh if line.strip()]


def generate_dataset(task: str, out_dir: Path | str, seed: int, *,
                     n_per_class: int = 10, n: int = 200,
                     positive_fraction: float = 0.5,
                     noise_sd_mv: float = 0.02) -> Path:
    """Generate + write a dataset and its ground-truth sidecar; returns the
    manifest path."""
    if task == "diagnosis":
        records, truths = generate_diagnosis_dataset(n_per_class, seed, noise_sd_mv)
    elif task == "risk":
        records, truths = generate_risk_dataset(n, positive_fraction, seed, noise_sd_mv)
    elif task == "age":
        records, truths = generate_age_dataset(n, seed, noise_sd_mv=noise_sd_mv)
    else:
        raise GenerationError(f"unknown task {task!r}")
    manifest = write_dataset(records, out_dir)
    write_ground_truth(truths, Path(out_dir) / "ground_truth.jsonl")
    return manifest

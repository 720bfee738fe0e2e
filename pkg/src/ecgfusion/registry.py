"""Canonical engineered-feature registry.

Per-lead groups: 20 heart-rate-variability measures, 3 parabolic
phase-space measures, 1 signal-quality index and 22 morphological measures
(46 per lead); plus 16 global self-reported variables. Expanded over the 12
leads this gives 46 * 12 + 16 = 568 columns.

Per-lead entries expand to 12 consecutive columns in standard lead order;
column ids are ``<feature_id>:<lead>`` (global entries keep the bare id).
Task views drop target-adjacent columns: the diagnosis view drops age and
sex, the age view drops age, the risk view keeps everything.
"""

from __future__ import annotations

from dataclasses import dataclass

from .io import LEAD_ORDER, META_KEYS

REGISTRY_VERSION = "1.0"

VIEWS = ("diagnosis", "risk", "age")


@dataclass(frozen=True)
class RegistryEntry:
    feature_id: str
    name: str
    unit: str
    scope: str   # "per-lead" | "global"
    group: str   # "HRV" | "EPPSM" | "SQI" | "MOR" | "META"
    description: str


def _e(fid: str, name: str, unit: str, group: str, desc: str,
       scope: str = "per-lead") -> RegistryEntry:
    return RegistryEntry(fid, name, unit, scope, group, desc)


HRV_ENTRIES = (
    _e("avnn", "mean RR", "ms", "HRV", "arithmetic mean of gated RR intervals"),
    _e("sdnn", "RR standard deviation", "ms", "HRV", "population SD of RR"),
    _e("rmssd", "RMS of successive differences", "ms", "HRV",
       "sqrt(mean(diff(RR)^2))"),
    _e("pnn50", "pNN50", "%", "HRV", "share of |diff(RR)| > 50 ms"),
    _e("cvrr", "RR coefficient of variation", "", "HRV", "sdnn / avnn"),
    _e("rr_min", "min RR", "ms", "HRV", "minimum gated RR"),
    _e("rr_max", "max RR", "ms", "HRV", "maximum gated RR"),
    _e("rr_median", "median RR", "ms", "HRV", "median gated RR"),
    _e("hr_mean", "mean heart rate", "bpm", "HRV", "mean of 60000/RR"),
    _e("vlf_power", "VLF power", "ms^2", "HRV",
       "Lomb-Scargle band power 0.003-0.04 Hz of the RR tachogram"),
    _e("lf_power", "LF power", "ms^2", "HRV", "Lomb-Scargle 0.04-0.15 Hz"),
    _e("hf_power", "HF power", "ms^2", "HRV", "Lomb-Scargle 0.15-0.40 Hz"),
    _e("total_power", "total power", "ms^2", "HRV", "Lomb-Scargle 0.003-0.40 Hz"),
    _e("lf_hf", "LF/HF ratio", "", "HRV", "lf_power / hf_power"),
    _e("lf_norm", "normalised LF", "", "HRV", "lf / (lf + hf)"),
    _e("hf_norm", "normalised HF", "", "HRV", "hf / (lf + hf)"),
    _e("sd1", "Poincare SD1", "ms", "HRV", "population SD of diff(RR)/sqrt(2)"),
    _e("sd2", "Poincare SD2", "ms", "HRV",
       "population SD of (RR_n + RR_n+1)/sqrt(2)"),
    _e("sd1_sd2", "SD1/SD2", "", "HRV", "Poincare axis ratio"),
    _e("sampen", "sample entropy", "", "HRV",
       "SampEn(m=2, r=0.2*sdnn) of the RR sequence"),
)

EPPSM_ENTRIES = (
    _e("eppsm_upper", "upper parabola curvature", "1/ms", "EPPSM",
       "quadratic coefficient of |dRR| vs RR fit over points at/above the "
       "median |dRR|"),
    _e("eppsm_lower", "lower parabola curvature", "1/ms", "EPPSM",
       "quadratic coefficient over points at/below the median |dRR|"),
    _e("eppsm_ratio", "parabola curvature ratio", "", "EPPSM",
       "eppsm_upper / eppsm_lower"),
)

SQI_ENTRIES = (
    _e("bsqi", "beat-detection agreement", "", "SQI",
       "N_match / (N_a + N_b - N_match) between the two detectors, "
       "150 ms tolerance"),
)

MOR_ENTRIES = (
    _e("r_amplitude", "R amplitude", "mV", "MOR",
       "max of the baseline-corrected median-beat template in the QRS window"),
    _e("q_amplitude", "Q amplitude", "mV", "MOR", "min before the R sample"),
    _e("s_amplitude", "S amplitude", "mV", "MOR", "min after the R sample"),
    _e("p_amplitude", "P amplitude", "mV", "MOR",
       "signed extremum in the P search window"),
    _e("t_amplitude", "T amplitude", "mV", "MOR",
       "signed extremum in the T search window"),
    _e("qrs_duration", "QRS duration", "ms", "MOR",
       "onset-offset span at 5% of the QRS extremum"),
    _e("pr_interval", "PR interval", "ms", "MOR",
       "P-peak-to-R-peak distance on the template"),
    _e("qt_interval", "QT interval", "ms", "MOR", "QRS onset to T offset"),
    _e("qtc_bazett", "corrected QT", "ms", "MOR", "QT / sqrt(mean RR in s)"),
    _e("st_level", "ST level", "mV", "MOR",
       "mean template amplitude 80-120 ms after R, baseline-corrected"),
    _e("st_slope", "ST slope", "mV/s", "MOR",
       "linear slope 80-160 ms after R"),
    _e("p_width", "P width", "ms", "MOR", "half-maximum extent of the P wave"),
    _e("t_width", "T width", "ms", "MOR", "half-maximum extent of the T wave"),
    _e("qrs_area", "QRS area", "mV*ms", "MOR",
       "signed integral of the template over the QRS span"),
    _e("qrs_energy", "QRS energy", "mV^2*ms", "MOR",
       "integral of the squared template over the QRS span"),
    _e("rs_ratio", "R/S ratio", "", "MOR", "|R| / |S| amplitude ratio"),
    _e("t_r_ratio", "T/R ratio", "", "MOR", "T / R amplitude ratio"),
    _e("p_r_ratio", "P/R ratio", "", "MOR", "P / R amplitude ratio"),
    _e("max_upslope", "max QRS upslope", "mV/s", "MOR",
       "max derivative inside the QRS span"),
    _e("max_downslope", "max QRS downslope", "mV/s", "MOR",
       "min derivative inside the QRS span"),
    _e("template_rms", "template RMS", "mV", "MOR",
       "RMS of the baseline-corrected template"),
    _e("beat_corr_mean", "beat-template correlation", "", "MOR",
       "mean Pearson correlation of individual beats with the template"),
)

META_ENTRIES = tuple(
    _e(key, key, "years" if key == "age" else "", "META",
       "self-reported clinical variable", scope="global")
    for key in META_KEYS
)

PER_LEAD_ENTRIES = HRV_ENTRIES + EPPSM_ENTRIES + SQI_ENTRIES + MOR_ENTRIES


class FeatureRegistry:
    """Ordered catalog of feature definitions and their column expansion."""

    def __init__(self) -> None:
        self.entries: tuple[RegistryEntry, ...] = PER_LEAD_ENTRIES + META_ENTRIES
        self.version = REGISTRY_VERSION
        ids = [e.feature_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("feature ids must be unique")
        self._column_ids = tuple(
            f"{e.feature_id}:{lead}"
            for e in PER_LEAD_ENTRIES for lead in LEAD_ORDER
        ) + tuple(e.feature_id for e in META_ENTRIES)

    @property
    def n_columns(self) -> int:
        return len(self._column_ids)

    @property
    def column_ids(self) -> tuple[str, ...]:
        return self._column_ids

    def view_column_indices(self, view: str | None) -> list[int]:
        """Column indices retained by a task view (None keeps everything)."""
        if view is None or view == "risk":
            dropped: set[str] = set()
        elif view == "diagnosis":
            dropped = {"age", "sex"}
        elif view == "age":
            dropped = {"age"}
        else:
            raise ValueError(f"unknown task view {view!r}")
        return [i for i, cid in enumerate(self._column_ids) if cid not in dropped]

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "entries": [e.__dict__ for e in self.entries],
            "column_ids": list(self._column_ids),
        }


_REGISTRY: FeatureRegistry | None = None


def get_registry() -> FeatureRegistry:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = FeatureRegistry()
    return _REGISTRY

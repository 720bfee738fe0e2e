"""Signal conditioning: resampling, denoising, R-peak detection, bSQI.

All functions are pure and deterministic; 2-D inputs are processed along the
last axis so a whole 12-lead record can be filtered in one call.

Two structurally different beat detectors are provided on purpose: the
quality index bSQI is the agreement ratio between them, so they must not
share logic. The primary detector is a Pan-Tompkins-style energy detector
(band-pass, derivative, squaring, moving-window integration, adaptive
threshold); the secondary one thresholds a matched-filtered signal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import signal as sps
from scipy.ndimage import uniform_filter1d

log = logging.getLogger(__name__)

RR_GATE_MS = (200.0, 3000.0)   # physiological gate, exclusive bounds
REFRACTORY_S = 0.200
BSQI_TOL_MS = 150.0


@dataclass
class BeatAnnotations:
    """Detected beats of one lead; RR intervals are physiologically gated."""

    r_peak_indices: np.ndarray
    fs: float
    rr_intervals_ms: np.ndarray
    sufficient: bool

    @classmethod
    def from_indices(cls, indices: np.ndarray, fs: float) -> "BeatAnnotations":
        idx = np.asarray(indices, dtype=int)
        if not np.all(np.diff(idx) > 0):
            raise ValueError("peak indices must be strictly increasing")
        rr = np.diff(idx) * 1000.0 / fs
        rr = rr[(rr > RR_GATE_MS[0]) & (rr < RR_GATE_MS[1])]
        return cls(r_peak_indices=idx, fs=fs, rr_intervals_ms=rr,
                   sufficient=idx.size >= 2)

    def to_json(self) -> dict:
        return {"fs": self.fs,
                "r_peak_indices": self.r_peak_indices.tolist(),
                "sufficient": self.sufficient}


@dataclass(frozen=True)
class QualityIndex:
    bsqi_per_lead: tuple[float, ...]
    bsqi_mean: float

    def validate(self) -> None:
        vals = np.asarray(self.bsqi_per_lead)
        if not ((vals >= 0) & (vals <= 1)).all():
            raise ValueError("bSQI values must lie in [0, 1]")
        if abs(self.bsqi_mean - float(vals.mean())) > 1e-12:
            raise ValueError("bsqi_mean must be the arithmetic mean")


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def resample(signal: np.ndarray, fs_in: float, fs_out: float) -> np.ndarray:
    """Polyphase windowed-sinc (Kaiser beta=8) resampling along the last axis.

    The output length is exactly round(n * fs_out / fs_in); the polyphase
    result is trimmed or edge-padded by at most one sample to honour it.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.shape[-1] == 0:
        raise ValueError("empty signal")
    if not (fs_in > 0 and fs_out > 0):
        raise ValueError("sampling rates must be positive")
    if not np.isfinite(x).all():
        raise ValueError("non-finite input samples")

    n = x.shape[-1]
    if fs_in == fs_out:
        return x.copy()
    ratio = (Fraction(fs_out).limit_denominator(10 ** 6)
             / Fraction(fs_in).limit_denominator(10 ** 6))
    if ratio.denominator > 10000:
        ratio = ratio.limit_denominator(10000)
    target = round(Fraction(n) * ratio)
    y = sps.resample_poly(x, ratio.numerator, ratio.denominator,
                          axis=-1, window=("kaiser", 8.0))
    if y.shape[-1] > target:
        y = y[..., :target]
    elif y.shape[-1] < target:
        pad = [(0, 0)] * (y.ndim - 1) + [(0, target - y.shape[-1])]
        y = np.pad(y, pad, mode="edge")
    return y


# ---------------------------------------------------------------------------
# Denoising
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _denoise_sos(fs: float, notch_hz: tuple[float, ...]) -> np.ndarray:
    sos = sps.butter(4, [0.5, 100.0], btype="bandpass", fs=fs, output="sos")
    sections = [sos]
    for f0 in notch_hz:
        b, a = sps.iirnotch(f0, Q=30.0, fs=fs)
        sections.append(sps.tf2sos(b, a))
    return np.vstack(sections)


def denoise(signal: np.ndarray, fs: float,
            notch_hz: tuple[float, ...] = (50.0, 60.0)) -> np.ndarray:
    """Zero-phase 0.5-100 Hz band-pass plus mains notches; length preserved.

    Degenerate inputs too short for filtfilt padding are passed through
    unchanged (logged, not raised).
    """
    x = np.asarray(signal, dtype=np.float64)
    sos = _denoise_sos(float(fs), tuple(notch_hz))
    padlen = 3 * (2 * sos.shape[0] + 1)
    if x.shape[-1] <= padlen:
        log.warning("denoise: signal of %d samples too short to filter; "
                    "passing through", x.shape[-1])
        return x.copy()
    return sps.sosfiltfilt(sos, x, axis=-1)


# ---------------------------------------------------------------------------
# R-peak detection
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _qrs_band_sos(fs: float) -> np.ndarray:
    return sps.butter(2, [5.0, 15.0], btype="bandpass", fs=fs, output="sos")


def _qrs_energy(x: np.ndarray, fs: float) -> np.ndarray:
    """Band-pass -> derivative -> square -> moving-window integration.

    All stages are zero-phase/centred, so energy maxima align with QRS
    centres and no lag compensation is needed.
    """
    sos = _qrs_band_sos(float(fs))
    padlen = 3 * (2 * sos.shape[0] + 1)
    bp = x if x.shape[-1] <= padlen else sps.sosfiltfilt(sos, x, axis=-1)
    deriv = np.gradient(bp, axis=-1)
    win = max(1, int(round(0.150 * fs)))
    return uniform_filter1d(deriv * deriv, size=win, axis=-1, mode="nearest")


def _refine_and_space(x: np.ndarray, candidates: np.ndarray, fs: float) -> np.ndarray:
    """Snap candidates to the local |x| extremum, then enforce the refractory
    spacing keeping the larger-amplitude peak on collision."""
    half = int(round(0.075 * fs))
    n = x.shape[0]
    refined = []
    for c in candidates:
        lo, hi = max(0, c - half), min(n, c + half + 1)
        refined.append(lo + int(np.argmax(np.abs(x[lo:hi]))))
    min_dist = int(round(REFRACTORY_S * fs))
    final: list[int] = []
    for idx in sorted(set(refined)):
        if final and idx - final[-1] < min_dist:
            if abs(x[idx]) > abs(x[final[-1]]):
                final[-1] = idx
        else:
            final.append(idx)
    return np.asarray(final, dtype=int)


def detect_r_peaks(signal: np.ndarray, fs: float,
                   energy: np.ndarray | None = None) -> BeatAnnotations:
    """Pan-Tompkins-style detector for one denoised lead.

    ``energy`` lets batch callers inject a precomputed `_qrs_energy` row
    (the filter stages vectorize across leads)."""
    x = np.asarray(signal, dtype=np.float64)
    mwi = _qrs_energy(x, fs) if energy is None else energy
    min_dist = max(1, int(round(REFRACTORY_S * fs)))
    cand, _ = sps.find_peaks(mwi, distance=min_dist)
    if cand.size == 0:
        return BeatAnnotations.from_indices(np.empty(0, dtype=int), fs)

    # Two-level adaptive threshold in the Pan-Tompkins spirit.
    spki = float(np.percentile(mwi, 99.0))
    npki = float(np.percentile(mwi, 60.0))
    accepted = []
    for c in cand:
        thr = npki + 0.25 * (spki - npki)
        v = float(mwi[c])
        if v > thr and v > 0:
            accepted.append(int(c))
            spki = 0.125 * v + 0.875 * spki
        else:
            npki = 0.125 * v + 0.875 * npki
    if not accepted:
        return BeatAnnotations.from_indices(np.empty(0, dtype=int), fs)
    peaks = _refine_and_space(x, np.asarray(accepted), fs)
    return BeatAnnotations.from_indices(peaks, fs)


def _mexican_hat(n_points: int, a: float) -> np.ndarray:
    t = np.arange(n_points) - (n_points - 1) / 2.0
    return (1.0 - (t / a) ** 2) * np.exp(-0.5 * (t / a) ** 2)


def matched_filter_magnitude(signal: np.ndarray, fs: float) -> np.ndarray:
    """|correlation| with a QRS-scale Mexican-hat wavelet (last axis)."""
    x = np.asarray(signal, dtype=np.float64)
    a = 0.012 * fs  # QRS-scale wavelet half-width
    n_w = max(5, int(round(8 * a)) | 1)
    wavelet = _mexican_hat(n_w, a)
    if x.ndim == 1:
        return np.abs(sps.fftconvolve(x, wavelet[::-1], mode="same"))
    return np.abs(sps.fftconvolve(x, wavelet[::-1][None, :], mode="same",
                                  axes=-1))


def detect_r_peaks_matched(signal: np.ndarray, fs: float,
                           filtered: np.ndarray | None = None) -> BeatAnnotations:
    """Secondary detector: amplitude threshold on a matched-filtered lead."""
    m = matched_filter_magnitude(signal, fs) if filtered is None else filtered
    floor = float(np.median(m))
    thr = max(4.0 * floor, 0.30 * float(np.percentile(m, 99.5)))
    if thr <= 0:
        return BeatAnnotations.from_indices(np.empty(0, dtype=int), fs)
    peaks, _ = sps.find_peaks(m, height=thr,
                              distance=max(1, int(round(REFRACTORY_S * fs))))
    return BeatAnnotations.from_indices(peaks.astype(int), fs)


# ---------------------------------------------------------------------------
# bSQI
# ---------------------------------------------------------------------------

def compute_bsqi(det_a: np.ndarray, det_b: np.ndarray, fs: float,
                 tol_ms: float = BSQI_TOL_MS) -> float:
    """Jaccard-style agreement N_match / (N_a + N_b - N_match).

    Matching is greedy one-to-one on the two sorted index sequences within
    +/- tol_ms; with both detections empty the index is defined as 0.
    """
    a = np.asarray(det_a, dtype=float)
    b = np.asarray(det_b, dtype=float)
    if a.size == 0 and b.size == 0:
        return 0.0
    tol = tol_ms * fs / 1000.0
    i = j = matched = 0
    while i < a.size and j < b.size:
        d = a[i] - b[j]
        if abs(d) <= tol:
            matched += 1
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return matched / (a.size + b.size - matched)


def record_quality(samples: np.ndarray, fs: float) -> QualityIndex:
    """Per-lead bSQI from the two detectors, plus its mean."""
    per_lead = []
    for lead in samples:
        ann_a = detect_r_peaks(lead, fs)
        ann_b = detect_r_peaks_matched(lead, fs)
        per_lead.append(compute_bsqi(ann_a.r_peak_indices,
                                     ann_b.r_peak_indices, fs))
    qi = QualityIndex(bsqi_per_lead=tuple(per_lead),
                      bsqi_mean=float(np.mean(per_lead)))
    qi.validate()
    return qi

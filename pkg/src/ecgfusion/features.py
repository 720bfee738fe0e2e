"""Per-record engineered features: HRV, phase-space, quality, morphology.

Every function returns a (values, missing) pair; a value is either finite
or masked missing, never NaN. Units and formulas are fixed by the registry
(`ecgfusion.registry`), and the tests pin the arithmetic with hand-computed
oracles, so any change here is a registry version bump.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps
from scipy.signal import lombscargle

from .io import N_LEADS, TARGET_FS_HZ, EcgRecord
from .preprocess import (BeatAnnotations, _qrs_energy, compute_bsqi, denoise,
                         detect_r_peaks, detect_r_peaks_matched,
                         matched_filter_magnitude, resample)
from .registry import (EPPSM_ENTRIES, HRV_ENTRIES, META_ENTRIES, MOR_ENTRIES,
                       get_registry)

N_HRV = len(HRV_ENTRIES) + len(EPPSM_ENTRIES)  # 23: the EPPSM trio counts in
N_MOR = len(MOR_ENTRIES)

_FREQ_BANDS = {"vlf": (0.003, 0.04), "lf": (0.04, 0.15), "hf": (0.15, 0.40)}

TEMPLATE_PRE_MS = 360.0
TEMPLATE_POST_MS = 460.0


def _sample_entropy(x: np.ndarray, m: int = 2, r: float | None = None) -> float | None:
    """SampEn(m, r); None when matches vanish or tolerance degenerates."""
    n = x.size
    if n < m + 2:
        return None
    if r is None:
        r = 0.2 * float(np.std(x))
    if r <= 0:
        return None

    def matches(mm: int) -> int:
        tpl = sliding_window_view(x, mm)
        d = np.max(np.abs(tpl[:, None, :] - tpl[None, :, :]), axis=2)
        hit = (d <= r) & ~np.eye(tpl.shape[0], dtype=bool)
        return int(hit.sum())

    b = matches(m)
    a = matches(m + 1)
    if a == 0 or b == 0:
        return None
    return float(-np.log(a / b))


def _eppsm(rr: np.ndarray) -> tuple[float | None, float | None, float | None]:
    """Parabola curvatures of the RR vs |dRR| phase plane.

    Points (RR_n, |RR_n+1 - RR_n|) are split at the median |dRR|; each half
    gets a least-squares quadratic and the curvature coefficients (plus
    their ratio) are the features.
    """
    if rr.size < 2:
        return None, None, None
    x = rr[:-1]
    y = np.abs(np.diff(rr))
    med = float(np.median(y))
    halves = []
    for mask in (y >= med, y <= med):
        xs, ys = x[mask], y[mask]
        if xs.size < 4 or np.ptp(xs) <= 0:
            halves.append(None)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("error", np.exceptions.RankWarning)
            try:
                coeffs = np.polyfit(xs, ys, 2)
            except (np.exceptions.RankWarning, np.linalg.LinAlgError):
                halves.append(None)
                continue
        halves.append(float(coeffs[0]))
    upper, lower = halves
    ratio = None
    if upper is not None and lower is not None and abs(lower) > 1e-12:
        ratio = upper / lower
    return upper, lower, ratio


def compute_hrv(ann: BeatAnnotations) -> tuple[np.ndarray, np.ndarray]:
    """23 HRV measures (incl. the EPPSM trio) of one lead.

    Returns (values, missing); with fewer than two gated RR intervals every
    feature is missing.
    """
    values = np.zeros(N_HRV)
    missing = np.ones(N_HRV, dtype=bool)
    rr = np.asarray(ann.rr_intervals_ms, dtype=float)
    if rr.size < 2:
        return values, missing

    def put(idx: int, v: float | None) -> None:
        if v is not None and np.isfinite(v):
            values[idx] = v
            missing[idx] = False

    diffs = np.diff(rr)
    avnn = float(rr.mean())
    sdnn = float(rr.std())
    put(0, avnn)
    put(1, sdnn)
    put(2, float(np.sqrt(np.mean(diffs ** 2))))
    put(3, float(100.0 * np.mean(np.abs(diffs) > 50.0)))
    put(4, sdnn / avnn if avnn > 0 else None)
    put(5, float(rr.min()))
    put(6, float(rr.max()))
    put(7, float(np.median(rr)))
    put(8, float(np.mean(60000.0 / rr)))

    # Spectral measures on the unevenly sampled tachogram.
    if rr.size >= 4:
        # Time stamp of each interval: cumulative sum ending at its beat.
        t = np.cumsum(rr) / 1000.0
        y = rr - avnn
        freqs = np.arange(0.004, 0.4001, 0.004)
        try:
            power = lombscargle(t, y, 2.0 * np.pi * freqs)
        except ZeroDivisionError:
            power = None
        if power is not None and np.isfinite(power).all():
            def band(lo: float, hi: float) -> float:
                m = (freqs >= lo) & (freqs <= hi)
                return float(np.trapezoid(power[m], freqs[m])) if m.sum() >= 2 else 0.0
            vlf = band(*_FREQ_BANDS["vlf"])
            lf = band(*_FREQ_BANDS["lf"])
            hf = band(*_FREQ_BANDS["hf"])
            put(9, vlf)
            put(10, lf)
            put(11, hf)
            put(12, band(0.003, 0.40))
            if hf > 0:
                put(13, lf / hf)
            if lf + hf > 0:
                put(14, lf / (lf + hf))
                put(15, hf / (lf + hf))

    sd1 = float(np.std(diffs / np.sqrt(2.0)))
    sd2 = float(np.std((rr[1:] + rr[:-1]) / np.sqrt(2.0)))
    put(16, sd1)
    put(17, sd2)
    if sd2 > 0:
        put(18, sd1 / sd2)
    put(19, _sample_entropy(rr))

    upper, lower, ratio = _eppsm(rr)
    put(20, upper)
    put(21, lower)
    put(22, ratio)
    return values, missing


# ---------------------------------------------------------------------------
# Morphology
# ---------------------------------------------------------------------------

def median_beat_template(signal: np.ndarray, ann: BeatAnnotations,
                         fs: float) -> tuple[np.ndarray, np.ndarray] | None:
    """Median across aligned beat windows; None when no beat fits entirely.

    Returns (template, beats) with beats of shape (n_beats, window)."""
    pre = int(round(TEMPLATE_PRE_MS / 1000.0 * fs))
    post = int(round(TEMPLATE_POST_MS / 1000.0 * fs))
    windows = [signal[r - pre:r + post + 1]
               for r in ann.r_peak_indices
               if r - pre >= 0 and r + post < signal.size]
    if not windows:
        return None
    beats = np.stack(windows)
    return np.median(beats, axis=0), beats


def _ms(fs: float, ms: float) -> int:
    return int(round(ms / 1000.0 * fs))


def _baseline_level(template: np.ndarray) -> float:
    """Isoelectric level as the modal amplitude of the template.

    The most frequent level is the inter-wave floor; a plain median is
    biased whenever waves cover a large share of the window (short RR) or
    the band-pass has shifted the floor."""
    hist, edges = np.histogram(template, bins=32)
    k = int(np.argmax(hist))
    sel = template[(template >= edges[k]) & (template <= edges[k + 1])]
    return float(np.median(sel)) if sel.size else float(np.median(template))


def _salient_extremum(body: np.ndarray, lo: int, hi: int) -> int | None:
    """Most salient local extremum of |body| on [lo, hi).

    Candidates are local maxima of |body|; those whose prominence clears
    max(0.02 mV, 25% of the tallest candidate) are preferred, which rejects
    noise ripples riding on a neighbouring beat's monotone tail. Returns an
    absolute index or None when the window holds no local maximum."""
    lo = max(0, lo)
    hi = min(body.size, hi)
    if hi - lo < 3:
        return None
    mag = np.abs(body[lo:hi])
    peaks, props = sps.find_peaks(mag, prominence=0.0)
    if peaks.size == 0:
        return None
    prom_thr = max(0.02, 0.25 * float(mag[peaks].max()))
    good = peaks[props["prominences"] >= prom_thr]
    cand = good if good.size else peaks
    return lo + int(cand[np.argmax(mag[cand])])


def _half_max_extent_ms(body: np.ndarray, idx: int, fs: float) -> float | None:
    peak = abs(body[idx])
    if peak <= 0:
        return None
    above = np.abs(body) >= 0.5 * peak
    lo = idx
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = idx
    while hi < body.size - 1 and above[hi + 1]:
        hi += 1
    return (hi - lo + 1) * 1000.0 / fs


def compute_morphology(signal: np.ndarray, ann: BeatAnnotations,
                       fs: float) -> tuple[np.ndarray, np.ndarray]:
    """22 fiducial-based measures on the median beat template of one lead."""
    values = np.zeros(N_MOR)
    missing = np.ones(N_MOR, dtype=bool)
    made = median_beat_template(np.asarray(signal, dtype=float), ann, fs)
    if made is None:
        return values, missing
    template, beats = made
    baseline = _baseline_level(template)
    body = template - baseline
    center = _ms(fs, TEMPLATE_PRE_MS)

    def put(idx: int, v: float | None) -> None:
        if v is not None and np.isfinite(v):
            values[idx] = v
            missing[idx] = False

    # R is the template max inside the QRS search window (definitional).
    qlo, qhi = center - _ms(fs, 60), center + _ms(fs, 60) + 1
    r_idx = qlo + int(np.argmax(body[qlo:qhi]))
    r_amp = float(body[r_idx])
    put(0, r_amp)

    q_seg = body[max(0, r_idx - _ms(fs, 80)):r_idx - 1]
    q_idx = q_amp = None
    if q_seg.size:
        q_idx = max(0, r_idx - _ms(fs, 80)) + int(np.argmin(q_seg))
        q_amp = float(body[q_idx])
        put(1, q_amp)
    s_seg = body[r_idx + 2:r_idx + _ms(fs, 80) + 1]
    s_idx = s_amp = None
    if s_seg.size:
        s_idx = r_idx + 2 + int(np.argmin(s_seg))
        s_amp = float(body[s_idx])
        put(2, s_amp)

    # Onset/offset: first run of 3 samples below 5% of the QRS extremum.
    qrs_extremum = float(np.max(np.abs(body[qlo:qhi])))
    thr = 0.05 * qrs_extremum
    onset = offset = None
    if qrs_extremum > 0:
        scan_lo = max(0, center - _ms(fs, 160))
        start = q_idx if q_idx is not None else r_idx
        below = np.abs(body) < thr
        run = 0
        for i in range(start, scan_lo - 1, -1):
            run = run + 1 if below[i] else 0
            if run >= 3:
                onset = i + 2
                break
        if onset is None:
            onset = scan_lo
        scan_hi = min(body.size - 1, center + _ms(fs, 160))
        start = s_idx if s_idx is not None else r_idx
        run = 0
        for i in range(start, scan_hi + 1):
            run = run + 1 if below[i] else 0
            if run >= 3:
                offset = i - 2
                break
        if offset is None:
            offset = scan_hi
        put(5, (offset - onset) * 1000.0 / fs)

    # P and T are picked as the most salient local extremum of |body| in
    # their search windows; the prominence gate keeps the tails of
    # neighbouring beats (monotone within the window) from winning.
    rr_mean_ms = (float(np.mean(ann.rr_intervals_ms))
                  if ann.rr_intervals_ms.size else None)

    plo, phi = center - _ms(fs, 350), center - _ms(fs, 80) + 1
    p_idx = _salient_extremum(body, plo, phi)
    p_amp = None
    if p_idx is not None:
        p_amp = float(body[p_idx])
        put(3, p_amp)
        put(6, (r_idx - p_idx) * 1000.0 / fs)
        put(11, _half_max_extent_ms(body, p_idx, fs))

    t_span = 440.0 if rr_mean_ms is None else min(440.0, 0.75 * rr_mean_ms)
    tlo = center + _ms(fs, 120)
    thi = min(body.size, center + _ms(fs, t_span) + 1)
    t_idx = _salient_extremum(body, tlo, thi)
    t_amp = None
    if t_idx is not None:
        t_amp = float(body[t_idx])
        put(4, t_amp)
        put(12, _half_max_extent_ms(body, t_idx, fs))

    if onset is not None and t_amp is not None and abs(t_amp) > 0:
        t_thr = 0.10 * abs(t_amp)
        t_off = t_idx
        while t_off < thi - 1 and abs(body[t_off + 1]) >= t_thr:
            t_off += 1
        qt = (t_off - onset) * 1000.0 / fs
        put(7, qt)
        if ann.rr_intervals_ms.size:
            avnn_s = float(np.mean(ann.rr_intervals_ms)) / 1000.0
            if avnn_s > 0:
                put(8, qt / np.sqrt(avnn_s))

    st_seg = body[r_idx + _ms(fs, 80):r_idx + _ms(fs, 120) + 1]
    if st_seg.size:
        put(9, float(st_seg.mean()))
    sl_seg = body[r_idx + _ms(fs, 80):r_idx + _ms(fs, 160) + 1]
    if sl_seg.size >= 2:
        slope = np.polyfit(np.arange(sl_seg.size) / fs, sl_seg, 1)[0]
        put(10, float(slope))

    if onset is not None and offset is not None and offset > onset:
        seg = body[onset:offset + 1]
        dt_ms = 1000.0 / fs
        put(13, float(seg.sum() * dt_ms))
        put(14, float(np.sum(seg ** 2) * dt_ms))
        grad = np.gradient(seg) * fs
        put(18, float(grad.max()))
        put(19, float(grad.min()))

    if s_amp is not None and abs(s_amp) > 1e-9:
        put(15, abs(r_amp) / abs(s_amp))
    if abs(r_amp) > 1e-9:
        if t_amp is not None:
            put(16, t_amp / r_amp)
        if p_amp is not None:
            put(17, p_amp / r_amp)

    put(20, float(np.sqrt(np.mean(body ** 2))))

    t_sd = float(template.std())
    if t_sd > 0:
        centered = beats - beats.mean(axis=1, keepdims=True)
        b_sd = centered.std(axis=1)
        tc = template - template.mean()
        ok = b_sd > 0
        if ok.any():
            corrs = (centered[ok] @ tc) / (beats.shape[1] * b_sd[ok] * t_sd)
            put(21, float(corrs.mean()))
    return values, missing


# ---------------------------------------------------------------------------
# Whole-record extraction
# ---------------------------------------------------------------------------

@dataclass
class FeatureVector:
    """One row of the feature matrix over the full 568-column registry."""

    record_id: str
    values: np.ndarray
    missing: np.ndarray

    def validate(self) -> None:
        reg = get_registry()
        if self.values.shape != (reg.n_columns,) or self.missing.shape != (reg.n_columns,):
            raise ValueError("length must equal the registry expansion")
        if not np.isfinite(self.values[~self.missing]).all():
            raise ValueError("non-finite feature value escaped masking")


def extract_features(record: EcgRecord) -> FeatureVector:
    """Denoise, detect beats, and fill all 568 registry columns."""
    reg = get_registry()
    n_per_lead_entries = (reg.n_columns - len(META_ENTRIES)) // N_LEADS
    values = np.zeros(reg.n_columns)
    missing = np.ones(reg.n_columns, dtype=bool)

    samples = record.samples.astype(np.float64)
    fs = record.spec.sampling_rate_hz
    if fs != TARGET_FS_HZ:
        samples = resample(samples, fs, TARGET_FS_HZ)
        fs = TARGET_FS_HZ
    clean = denoise(samples, fs)
    # both detector front-ends vectorize across the 12 leads
    energy = _qrs_energy(clean, fs)
    matched = matched_filter_magnitude(clean, fs)

    for lead in range(N_LEADS):
        ann = detect_r_peaks(clean[lead], fs, energy=energy[lead])
        ann_b = detect_r_peaks_matched(clean[lead], fs,
                                       filtered=matched[lead])

        hrv_vals, hrv_miss = compute_hrv(ann)
        mor_vals, mor_miss = compute_morphology(clean[lead], ann, fs)
        bsqi = compute_bsqi(ann.r_peak_indices, ann_b.r_peak_indices, fs)

        # Entry-major layout: entry block of 12 columns, lead-th slot.
        for k in range(N_HRV):
            col = k * N_LEADS + lead
            values[col] = hrv_vals[k]
            missing[col] = hrv_miss[k]
        col = N_HRV * N_LEADS + lead   # the single SQI entry
        values[col] = bsqi
        missing[col] = False
        for k in range(N_MOR):
            col = (N_HRV + 1 + k) * N_LEADS + lead
            values[col] = mor_vals[k]
            missing[col] = mor_miss[k]

    meta = record.meta.as_dict()
    base = n_per_lead_entries * N_LEADS
    for k, key in enumerate(m.feature_id for m in META_ENTRIES):
        v = meta[key]
        if v is not None and np.isfinite(float(v)):
            values[base + k] = float(v)
            missing[base + k] = False

    fv = FeatureVector(record_id=record.record_id, values=values, missing=missing)
    fv.validate()
    return fv

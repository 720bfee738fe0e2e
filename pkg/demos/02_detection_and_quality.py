"""Beat detection and the bSQI quality index.

Two structurally different detectors run on every lead: the Pan-Tompkins-
style energy detector and an amplitude threshold on a matched-filtered
signal. Their agreement ratio is the bSQI; on clean synthetic data it sits
near 1.0 and degrades as noise grows.
"""

import numpy as np

from ecgfusion.preprocess import (compute_bsqi, denoise, detect_r_peaks,
                                  detect_r_peaks_matched, record_quality)
from ecgfusion.synth import GenSpec, generate_record

record, truth = generate_record(
    GenSpec(task="diagnosis", arrhythmias=(), duration_s=10.0,
            noise_sd_mv=0.02, seed=7), "demo")
fs = record.spec.sampling_rate_hz
clean = denoise(record.samples, fs)

ann_a = detect_r_peaks(clean[1], fs)
ann_b = detect_r_peaks_matched(clean[1], fs)
truth_samples = np.asarray(truth.beat_times_ms) * fs / 1000.0
errors = [np.abs(ann_a.r_peak_indices - t).min() / fs * 1000.0
          for t in truth_samples]
print(f"true beats: {len(truth_samples)}  primary: {ann_a.r_peak_indices.size} "
      f"(worst alignment {max(errors):.1f} ms)  secondary: "
      f"{ann_b.r_peak_indices.size}")
print(f"lead II bSQI: "
      f"{compute_bsqi(ann_a.r_peak_indices, ann_b.r_peak_indices, fs):.3f}")

print("\nnoise sweep (mean bSQI over the 12 leads):")
for noise in (0.0, 0.02, 0.1, 0.25, 0.5):
    rec, _ = generate_record(
        GenSpec(task="diagnosis", duration_s=10.0, noise_sd_mv=noise, seed=7),
        "demo")
    qi = record_quality(denoise(rec.samples, fs), fs)
    bar = "#" * int(round(qi.bsqi_mean * 40))
    print(f"  noise {noise:4.2f} mV -> bSQI {qi.bsqi_mean:.3f} {bar}")

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecgfusion.preprocess import (BeatAnnotations, compute_bsqi, denoise,
                                  detect_r_peaks, detect_r_peaks_matched,
                                  record_quality, resample)
from ecgfusion.synth import GenSpec, generate_record


class TestResample:
    def test_length_contract(self):
        y = resample(np.random.default_rng(0).normal(size=5000), 500.0, 400.0)
        assert y.shape == (4000,)

    def test_identity_when_equal(self):
        x = np.random.default_rng(1).normal(size=1000)
        assert np.array_equal(resample(x, 400.0, 400.0), x)

    def test_sine_correlation(self):
        fs_in, fs_out = 1000.0, 400.0
        t_in = np.arange(10000) / fs_in
        x = np.sin(2 * np.pi * 5.0 * t_in)
        y = resample(x, fs_in, fs_out)
        t_out = np.arange(y.size) / fs_out
        ref = np.sin(2 * np.pi * 5.0 * t_out)
        corr = np.corrcoef(y, ref)[0, 1]
        assert corr >= 0.999

    def test_tone_energy_preserved(self):
        fs_in, fs_out = 1000.0, 400.0
        t = np.arange(20000) / fs_in
        x = np.sin(2 * np.pi * 150.0 * t)   # below 0.4 * fs_out
        y = resample(x, fs_in, fs_out)
        # compare mean power away from the edges
        pin = np.mean(x[500:-500] ** 2)
        pout = np.mean(y[200:-200] ** 2)
        assert abs(pout - pin) / pin < 0.01

    def test_roundtrip_rms(self):
        rng = np.random.default_rng(2)
        # strictly band-limited signal: random tones below 100 Hz
        t = np.arange(4000) / 400.0
        x = np.zeros_like(t)
        for f in rng.uniform(1.0, 100.0, size=8):
            x += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        y = resample(resample(x, 400.0, 1000.0), 1000.0, 400.0)
        core = slice(200, -200)
        rms_err = np.sqrt(np.mean((y[core] - x[core]) ** 2))
        assert rms_err < 0.01 * np.sqrt(np.mean(x[core] ** 2))

    def test_errors(self):
        with pytest.raises(ValueError):
            resample(np.array([1.0, np.nan]), 400, 400)
        with pytest.raises(ValueError):
            resample(np.array([]), 400, 200)
        with pytest.raises(ValueError):
            resample(np.ones(10), -1, 200)


class TestDenoise:
    def test_dc_rejection(self):
        x = np.full(4000, 5.0)
        y = denoise(x, 400.0)
        assert np.abs(y).mean() < 0.05  # < 1% of the 5 mV offset

    def test_inband_tone_preserved(self):
        t = np.arange(4000) / 400.0
        x = np.sin(2 * np.pi * 10.0 * t)
        y = denoise(x, 400.0)
        core = slice(400, -400)
        amp_ratio = np.abs(y[core]).max() / np.abs(x[core]).max()
        assert amp_ratio > 0.95

    def test_zero_signal(self):
        assert np.allclose(denoise(np.zeros(3000), 400.0), 0.0)

    def test_length_preserved_2d(self):
        x = np.random.default_rng(0).normal(size=(12, 2800))
        assert denoise(x, 400.0).shape == (12, 2800)

    def test_short_signal_passthrough(self):
        x = np.random.default_rng(0).normal(size=10)
        assert np.array_equal(denoise(x, 400.0), x)


class TestDetect:
    def test_clean_60bpm(self, clean_record):
        rec, truth = clean_record
        clean = denoise(rec.samples, 400.0)
        ann = detect_r_peaks(clean[1], 400.0)
        n_true = len(truth.beat_times_ms)
        assert abs(ann.r_peak_indices.size - n_true) <= 1
        truth_idx = np.asarray(truth.beat_times_ms) * 0.4
        for ti in truth_idx:
            err_ms = np.min(np.abs(ann.r_peak_indices - ti)) * 2.5
            assert err_ms <= 20.0

    def test_flat_signal_insufficient(self):
        ann = detect_r_peaks(np.zeros(4000), 400.0)
        assert not ann.sufficient
        assert ann.r_peak_indices.size == 0

    def test_st_150bpm(self):
        rec, truth = generate_record(
            GenSpec(task="diagnosis", arrhythmias=("ST",), duration_s=8.0,
                    noise_sd_mv=0.01, seed=13), "st")
        ann = detect_r_peaks(denoise(rec.samples, 400.0)[1], 400.0)
        assert abs(ann.r_peak_indices.size - len(truth.beat_times_ms)) <= 1

    def test_refractory_spacing(self, clean_record):
        rec, _ = clean_record
        ann = detect_r_peaks(denoise(rec.samples, 400.0)[1], 400.0)
        assert (np.diff(ann.r_peak_indices) >= 0.2 * 400.0).all()

    def test_translation_equivariance(self, clean_record):
        rec, _ = clean_record
        x = denoise(rec.samples, 400.0)[1]
        k = 40
        shifted = np.r_[np.zeros(k), x[:-k]]
        a = detect_r_peaks(x, 400.0).r_peak_indices
        b = detect_r_peaks(shifted, 400.0).r_peak_indices
        # compare away from the boundaries
        a_core = a[(a > 400) & (a < x.size - 400)]
        b_core = b[(b > 400 + k) & (b < x.size - 400)]
        assert np.array_equal(a_core + k, b_core)

    def test_rr_gate(self):
        ann = BeatAnnotations.from_indices(np.array([0, 40, 440, 2000]), 400.0)
        # 100 ms dropped (too fast), 1000 ms kept, 3900 ms dropped (too slow)
        assert np.allclose(ann.rr_intervals_ms, [1000.0])


class TestBsqi:
    def test_identical(self):
        det = np.array([100, 500, 900])
        assert compute_bsqi(det, det, 400.0) == 1.0

    def test_partial_match(self):
        a = np.arange(10) * 400 + 100          # 10 beats
        b = (np.arange(8) * 400 + 110)          # 8 beats, all within tol
        assert compute_bsqi(a, b, 400.0) == pytest.approx(8 / 10)

    def test_disjoint(self):
        a = np.array([0, 1000, 2000])
        b = a + 400  # 1000 ms apart > 150 ms tol? 400 samples = 1000 ms
        assert compute_bsqi(a, b, 400.0) == 0.0

    def test_both_empty(self):
        assert compute_bsqi(np.array([]), np.array([]), 400.0) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(a=st.lists(st.integers(0, 4000), max_size=12),
           b=st.lists(st.integers(0, 4000), max_size=12))
    def test_symmetry_property(self, a, b):
        av = np.unique(np.asarray(a, dtype=float))
        bv = np.unique(np.asarray(b, dtype=float))
        assert compute_bsqi(av, bv, 400.0) == compute_bsqi(bv, av, 400.0)

    @settings(max_examples=100, deadline=None)
    @given(a=st.lists(st.integers(0, 4000), max_size=12),
           b=st.lists(st.integers(0, 4000), max_size=12))
    def test_range_property(self, a, b):
        av = np.unique(np.asarray(a, dtype=float))
        bv = np.unique(np.asarray(b, dtype=float))
        v = compute_bsqi(av, bv, 400.0)
        assert 0.0 <= v <= 1.0

    def test_two_detectors_agree_on_clean_data(self, clean_record):
        rec, _ = clean_record
        qi = record_quality(denoise(rec.samples, 400.0), 400.0)
        assert qi.bsqi_mean > 0.9
        assert qi.bsqi_mean == pytest.approx(np.mean(qi.bsqi_per_lead))

    def test_matched_detector_flat(self):
        ann = detect_r_peaks_matched(np.zeros(4000), 400.0)
        assert ann.r_peak_indices.size == 0

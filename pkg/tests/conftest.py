import numpy as np
import pytest

from ecgfusion.io import SignalSpec, TaskLabels, EcgRecord, MetaFields
from ecgfusion.synth import GenSpec, generate_record


@pytest.fixture(scope="session")
def clean_record():
    """Noiseless sinus record with ground truth, reused across tests."""
    spec = GenSpec(task="diagnosis", arrhythmias=(), duration_s=10.0,
                   noise_sd_mv=0.0, seed=3)
    return generate_record(spec, "clean-0")


@pytest.fixture
def small_records():
    """Six noisy records, one per arrhythmia, plus one NSR."""
    out = []
    for i, arrs in enumerate([(), ("1dAVb",), ("RBBB",), ("LBBB",),
                              ("SB",), ("ST",), ("AF",)]):
        spec = GenSpec(task="diagnosis", arrhythmias=arrs, duration_s=8.0,
                       noise_sd_mv=0.02, seed=50 + i)
        out.append(generate_record(spec, f"rec-{i}"))
    return out


def make_flat_record(record_id="flat", n=3200):
    samples = np.zeros((12, n), dtype=np.float32)
    return EcgRecord(
        record_id=record_id,
        spec=SignalSpec(sampling_rate_hz=400.0, n_samples=n),
        samples=samples,
        labels=TaskLabels(arrhythmia={c: False for c in
                                      ("1dAVb", "RBBB", "LBBB", "SB", "AF", "ST")}),
        meta=MetaFields(),
    )

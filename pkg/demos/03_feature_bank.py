"""The engineered-feature bank: 46 per-lead measures x 12 leads + 16 META
variables = 568 columns, and how key measures track the generator's truth.
"""

from ecgfusion.features import extract_features
from ecgfusion.registry import get_registry
from ecgfusion.synth import GenSpec, generate_record

registry = get_registry()
print(f"registry v{registry.version}: {len(registry.entries)} definitions "
      f"-> {registry.n_columns} columns")
for group in ("HRV", "EPPSM", "SQI", "MOR", "META"):
    n = sum(1 for e in registry.entries if e.group == group)
    print(f"  {group:5s} {n:2d} entries")
print(f"task views: diagnosis {len(registry.view_column_indices('diagnosis'))}"
      f", risk {len(registry.view_column_indices('risk'))}"
      f", age {len(registry.view_column_indices('age'))} columns")

cols = list(registry.column_ids)
print("\nmeasured vs planted (lead II):")
print(f"{'class':8s} {'HR meas/true':>14s} {'PR meas/true':>14s} "
      f"{'QRS meas/true':>14s} {'rmssd':>7s}")
for arrs, seed in [((), 1), (("1dAVb",), 2), (("RBBB",), 3), (("SB",), 4),
                   (("ST",), 5), (("AF",), 6)]:
    record, truth = generate_record(
        GenSpec(task="diagnosis", arrhythmias=arrs, duration_s=9.0,
                noise_sd_mv=0.02, seed=seed), "demo")
    fv = extract_features(record)

    def val(name):
        i = cols.index(name)
        return float("nan") if fv.missing[i] else fv.values[i]

    name = "+".join(arrs) if arrs else "NSR"
    print(f"{name:8s} {val('hr_mean:II'):6.1f}/{truth.mean_hr_bpm:6.1f} "
          f"{val('pr_interval:II'):6.0f}/{truth.pr_ms:6.0f} "
          f"{val('qrs_duration:II'):6.0f}/{truth.qrs_width_ms:6.0f} "
          f"{val('rmssd:II'):7.1f}")

missing_share = fv.missing.mean()
print(f"\nmissing-mask share on the last record: {missing_share:.1%} "
      "(masked, never NaN)")

"""ecgfusion: feature-engineering, deep-learning and merged pipelines for
12-lead ECG diagnosis, AF-risk prediction and age estimation, with a
synthetic generator providing ground truth at desk scale."""

__version__ = "0.1.0"

from .io import (ARRHYTHMIA_CLASSES, LEAD_ORDER, DatasetSplit, EcgDataset,
                 EcgRecord, MetaFields, SignalSpec, SplitPolicy, TaskLabels,
                 make_split, read_dataset, write_dataset)
from .registry import FeatureRegistry, get_registry

__all__ = [
    "ARRHYTHMIA_CLASSES", "DatasetSplit", "EcgDataset", "EcgRecord",
    "FeatureRegistry", "LEAD_ORDER", "MetaFields", "SignalSpec", "SplitPolicy",
    "TaskLabels", "get_registry", "make_split", "read_dataset", "write_dataset",
]

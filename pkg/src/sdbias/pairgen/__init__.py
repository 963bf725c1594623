"""Synthetic videos with planted static/dynamic factors, and factor pairs."""

from .dataset_io import export_dataset, import_dataset
from .pairs import (
    Factor,
    FactorPair,
    generate_dataset,
    label_for,
    make_dynamic_pair,
    make_identical_pair,
    make_pairs,
    make_static_pair,
    make_static_pair_flow,
    num_classes,
    random_nonidentity_permutation,
)
from .video import (
    NUM_STYLES,
    TaskMode,
    Video,
    VideoSpec,
    apply_style,
    flow_analog,
    invert_style,
    jitter_flow,
)

__all__ = [
    "Factor", "FactorPair", "NUM_STYLES", "TaskMode", "Video", "VideoSpec",
    "apply_style", "export_dataset", "flow_analog", "generate_dataset", "import_dataset",
    "invert_style", "jitter_flow", "label_for", "make_dynamic_pair", "make_identical_pair",
    "make_pairs", "make_static_pair", "make_static_pair_flow", "num_classes",
    "random_nonidentity_permutation",
]

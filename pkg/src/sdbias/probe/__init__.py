"""Static/dynamic bias metrics over activation traces."""

from .metrics import (
    DEFAULT_THRESHOLD,
    LAYER_FACTORS,
    UNIT_CLASSES,
    UNIT_FACTORS,
    BiasReport,
    LayerReport,
    apportion,
    bias_report,
    center_bias,
    classify_units,
    epoch_sweep,
    factor_scores,
    layer_bias,
    unit_scores,
)
from .trace import ActivationTrace, collect_trace, pool_batch, read_trace, write_trace

__all__ = [
    "DEFAULT_THRESHOLD", "LAYER_FACTORS", "UNIT_CLASSES", "UNIT_FACTORS", "ActivationTrace",
    "BiasReport", "LayerReport", "apportion", "bias_report", "center_bias", "classify_units",
    "collect_trace", "epoch_sweep", "factor_scores", "layer_bias", "pool_batch", "read_trace",
    "unit_scores", "write_trace",
]

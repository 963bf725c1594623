"""Toy spatiotemporal networks, fusion modules, training and checkpoint files."""

from .checkpoint import load_checkpoint, save_checkpoint
from .models import (ArchitectureDescriptor, CrossConnection, Fusion, Head, Kind, Model,
                     ModelCheckpoint, SingleStream3D, TwoStream, build_model, model_inputs,
                     model_targets)
from .train import (DropoutConfig, NumericFailure, TrainConfig, evaluate, predict, shuffle_video,
                    shuffled, train)

__all__ = [
    "ArchitectureDescriptor", "CrossConnection", "Fusion", "Head", "Kind", "Model",
    "ModelCheckpoint", "SingleStream3D", "TwoStream", "build_model", "model_inputs",
    "model_targets", "load_checkpoint", "save_checkpoint", "DropoutConfig", "NumericFailure",
    "TrainConfig", "evaluate", "predict", "shuffle_video", "shuffled", "train",
]

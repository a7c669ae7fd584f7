"""Trainable convolutional segmenter: model, losses, data pipeline,
training loop, tiled inference, and checkpoint IO."""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    Batch,
    IDENTITY_JITTER,
    JitterParams,
    apply_jitter,
    draw_jitter,
    jitter,
    sample_crops,
    to_tensors,
)
from .infer import predict_tiled, tile_origins
from .losses import combined_loss, cross_entropy, lovasz_softmax, lovasz_softmax_per_class
from .model import SegNet, build_net, forward
from .train import (
    TrainConfig,
    TrainTrace,
    backward_and_step,
    retrain_with_predictions,
    sgd_step,
    train,
    training_miou,
)

__all__ = [
    "Batch",
    "IDENTITY_JITTER",
    "JitterParams",
    "SegNet",
    "TrainConfig",
    "TrainTrace",
    "apply_jitter",
    "backward_and_step",
    "build_net",
    "combined_loss",
    "cross_entropy",
    "draw_jitter",
    "forward",
    "jitter",
    "load_checkpoint",
    "lovasz_softmax",
    "lovasz_softmax_per_class",
    "predict_tiled",
    "retrain_with_predictions",
    "sample_crops",
    "save_checkpoint",
    "sgd_step",
    "tile_origins",
    "to_tensors",
    "train",
    "training_miou",
]

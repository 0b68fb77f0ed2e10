"""Context-inclusive classification models over precomputed sentence embeddings."""

from .config import ContextVariant, ModelConfig, TrainConfig
from .network import (
    CimParameters,
    encode_document,
    forward,
    init_params,
    loss_and_grads,
    parameter_shapes,
    softmax,
    tag_window,
)
from .predictions import PredictionEntry, PredictionSet
from .data import CimItem, TagItem, build_items, build_tag_items
from .training import (
    Adam,
    EpochStats,
    GradCheckReport,
    TrainResult,
    grad_check,
    predict,
    predict_tagger,
    story_locality_batches,
    train,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "CimItem",
    "CimParameters",
    "ContextVariant",
    "EpochStats",
    "GradCheckReport",
    "ModelConfig",
    "PredictionEntry",
    "PredictionSet",
    "TagItem",
    "TrainConfig",
    "TrainResult",
    "build_items",
    "build_tag_items",
    "encode_document",
    "forward",
    "grad_check",
    "init_params",
    "load_checkpoint",
    "loss_and_grads",
    "parameter_shapes",
    "predict",
    "predict_tagger",
    "save_checkpoint",
    "softmax",
    "story_locality_batches",
    "tag_window",
    "train",
]

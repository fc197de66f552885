"""Road vanishing point detection via multi-scale heatmap regression."""

from .backbones import BackboneConfig, BackboneKind, build_backbone, parameter_count
from .config import RunConfig, load_config, save_config
from .data import ImageSample, synth_dataset
from .evaluation import EvalReport, Predictor, evaluate, norm_dist
from .heads import Scale, UpsampleVariant, VPPrediction, decode
from .losses import LossBreakdown, LossConfig
from .model import DecodeMode, VPNet
from .training import Checkpoint, fit, lr_at

__version__ = "0.1.0"

__all__ = [
    "BackboneConfig",
    "BackboneKind",
    "Checkpoint",
    "DecodeMode",
    "EvalReport",
    "ImageSample",
    "LossBreakdown",
    "LossConfig",
    "Predictor",
    "RunConfig",
    "Scale",
    "UpsampleVariant",
    "VPNet",
    "VPPrediction",
    "build_backbone",
    "decode",
    "evaluate",
    "fit",
    "load_config",
    "lr_at",
    "norm_dist",
    "parameter_count",
    "save_config",
    "synth_dataset",
]

"""Backbone construction: config validation, building, parameter counting."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import torch
import torch.nn as nn

from .common import DepthwiseSeparableConv, init_prediction_layer, init_weights, parameter_count
from .hourglass import HourglassNet, Residual
from .hrnet import HRNet, BasicBlock, Bottleneck


class BackboneKind(str, Enum):
    HRNET48_M = "hrnet48m"
    HRNET48 = "hrnet48"
    HOURGLASS4 = "hourglass4"


# deepest stride of the multi-resolution trunk
MAX_STRIDE = 32


@dataclass
class BackboneConfig:
    kind: BackboneKind = BackboneKind.HRNET48_M
    input_size: int = 320
    width: int = 48
    stacks: int = 4

    @property
    def depthwise(self) -> bool:
        return self.kind is BackboneKind.HRNET48_M

    def validate(self) -> None:
        if not isinstance(self.kind, BackboneKind):
            raise ValueError(f"unsupported backbone kind: {self.kind!r}")
        if self.input_size <= 0 or self.input_size % MAX_STRIDE != 0:
            raise ValueError(
                f"input_size must be a positive multiple of {MAX_STRIDE}, got {self.input_size}"
            )
        if self.width <= 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.stacks <= 0:
            raise ValueError(f"stacks must be positive, got {self.stacks}")


def zero_residual_norms(module: nn.Module) -> None:
    """Zero the last norm/projection of every residual block.

    Every block then starts as an identity mapping, which keeps activation
    magnitude flat through the deep trunk and makes training stable at the
    default learning rates.
    """
    for m in module.modules():
        if isinstance(m, BasicBlock):
            nn.init.zeros_(m.bn2.weight)
        elif isinstance(m, Bottleneck):
            nn.init.zeros_(m.bn3.weight)
        elif isinstance(m, Residual):
            nn.init.zeros_(m.conv3.weight)


def build_backbone(config: BackboneConfig, seed: int | None = None) -> nn.Module:
    """Build the feature extractor mapping (3, S, S) images to (width, S/4, S/4).

    A seed makes construction reproducible: two builds with equal seeds have
    identical initial parameters.
    """
    config.validate()
    if seed is not None:
        torch.manual_seed(seed)
    if config.kind is BackboneKind.HRNET48_M:
        net = HRNet(width=config.width, depthwise=True)
    elif config.kind is BackboneKind.HRNET48:
        net = HRNet(width=config.width, depthwise=False)
    elif config.kind is BackboneKind.HOURGLASS4:
        net = HourglassNet(width=config.width, stacks=config.stacks)
    else:  # pragma: no cover - validate() already rejects
        raise ValueError(f"unsupported backbone kind: {config.kind!r}")
    init_weights(net)
    zero_residual_norms(net)
    return net


__all__ = [
    "BackboneConfig",
    "BackboneKind",
    "DepthwiseSeparableConv",
    "HRNet",
    "HourglassNet",
    "build_backbone",
    "init_weights",
    "parameter_count",
]

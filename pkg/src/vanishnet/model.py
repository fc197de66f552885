"""Full detector: backbone features, dual-scale heatmaps, coordinate grid."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn as nn

from .backbones import BackboneConfig, build_backbone
from .backbones.common import init_prediction_layer, init_weights
from .heads import (
    CoordHead,
    QuarterHead,
    Scale,
    Upsampler,
    UpsampleVariant,
    VPPrediction,
    decode,
    decode_heatmap_argmax,
)


@dataclass
class ModelOutputs:
    heatmap_q: torch.Tensor  # (B, 1, S/4, S/4)
    heatmap_h: torch.Tensor  # (B, 1, S/2, S/2)
    grid: torch.Tensor  # (B, 3, G, G) confidence / offset_x / offset_y logits


class VPNet(nn.Module):
    """Backbone + quarter heatmap + 2x upsampler + coordinate regression.

    The upsampler input is the concatenation of the backbone features and the
    predicted quarter-scale heatmap. The coordinate head sits at the chosen
    regression scale: on the upsampled half-scale features by default, or on
    the quarter-scale concatenation.
    """

    def __init__(
        self,
        backbone_config: BackboneConfig,
        upsample: UpsampleVariant = UpsampleVariant.UPU,
        regression_scale: Scale = Scale.HALF,
        seed: int | None = None,
    ):
        super().__init__()
        backbone_config.validate()
        if seed is not None:
            torch.manual_seed(seed)
        self.input_size = backbone_config.input_size
        self.regression_scale = regression_scale
        self.backbone = build_backbone(backbone_config)
        channels = self.backbone.out_channels
        self.quarter_head = QuarterHead(channels)
        self.upsampler = Upsampler(channels, upsample)
        self.coord_head = CoordHead(channels + 1)
        init_weights(self.quarter_head)
        init_weights(self.upsampler)
        init_weights(self.coord_head)
        init_prediction_layer(self.quarter_head.conv)
        init_prediction_layer(self.upsampler.to_heatmap)
        init_prediction_layer(self.coord_head.conv[-1])
        with torch.no_grad():
            # negative confidence prior: background cells start satisfied, so
            # the point cell's feature pathway dominates early updates
            self.coord_head.conv[-1].bias[0] = -4.0

    @property
    def grid_size(self) -> int:
        return self.input_size // self.regression_scale.stride

    @property
    def cell_size(self) -> float:
        return float(self.regression_scale.stride)

    def forward(self, images: torch.Tensor) -> ModelOutputs:
        features = self.backbone(images)
        expected = self.input_size // 4
        if features.shape[-2:] != (expected, expected):
            raise RuntimeError(
                f"backbone produced {tuple(features.shape[-2:])}, expected {expected}x{expected}"
            )
        heatmap_q = self.quarter_head(features)
        fused_q = torch.cat([features, heatmap_q], dim=1)
        heatmap_h, fused_h = self.upsampler(heatmap_q, features)
        source = fused_h if self.regression_scale is Scale.HALF else fused_q
        grid = self.coord_head(source)
        return ModelOutputs(heatmap_q=heatmap_q, heatmap_h=heatmap_h, grid=grid)

    def parameter_groups(self):
        """Disjoint (backbone, rest) parameter lists covering every parameter."""
        backbone = list(self.backbone.parameters())
        backbone_ids = {id(p) for p in backbone}
        rest = [p for p in self.parameters() if id(p) not in backbone_ids]
        return backbone, rest


class DecodeMode(str, Enum):
    COORDINATE = "coordinate"  # confidence argmax + sigmoid offsets
    ARGMAX_HALF = "argmax_half"  # peak cell of the half-scale heatmap
    ARGMAX_QUARTER = "argmax_quarter"  # peak cell of the quarter-scale heatmap


def decode_outputs(outputs: ModelOutputs, mode: DecodeMode, cell_size: float = 2.0) -> VPPrediction:
    """Turn one sample's raw outputs into an input-pixel point."""
    if mode is DecodeMode.COORDINATE:
        return decode(CoordHead.to_grid(outputs.grid), cell_size)
    if mode is DecodeMode.ARGMAX_HALF:
        return decode_heatmap_argmax(outputs.heatmap_h, Scale.HALF.stride)
    if mode is DecodeMode.ARGMAX_QUARTER:
        return decode_heatmap_argmax(outputs.heatmap_q, Scale.QUARTER.stride)
    raise ValueError(f"unknown decode mode: {mode!r}")

"""Prediction heads: multi-scale heatmaps, upsampling variants, grid decoding.

The quarter head turns backbone features into a coarse single-channel
heatmap. An upsampler consumes the concatenation of the features and that
heatmap and produces both the half-scale heatmap and a multi-channel
half-scale representation for the coordinate head. The coordinate head
emits per-cell (confidence, x-offset, y-offset) planes which `decode` turns
into a sub-pixel point: the winning cell is the confidence argmax and the
point is the sigmoid-bounded offset from the cell's top-left corner.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch
import torch.nn as nn

from .backbones.common import bn


class Scale(str, Enum):
    QUARTER = "quarter"
    HALF = "half"

    @property
    def stride(self) -> int:
        return 4 if self is Scale.QUARTER else 2


class UpsampleVariant(str, Enum):
    DECONV_BLOCK = "deconv"
    UPU = "upu"
    UPU_2STAGE = "upu2"


@dataclass
class GridPrediction:
    """Per-cell raw head outputs: confidence logits and pre-sigmoid offsets."""

    confidence: object  # (grid_h, grid_w) array or tensor
    offset_x: object
    offset_y: object

    @property
    def grid_h(self) -> int:
        return int(self.confidence.shape[0])

    @property
    def grid_w(self) -> int:
        return int(self.confidence.shape[1])


@dataclass
class VPPrediction:
    x: float
    y: float
    confidence: float
    cell: tuple[int, int]  # (row, col) of the responsible grid cell


def _deconv_block(channels: int) -> nn.Sequential:
    # 5x5 stride-2 deconvolution sized for an exact 2x upsample
    return nn.Sequential(
        nn.ConvTranspose2d(channels, channels, 5, stride=2, padding=2, output_padding=1, bias=False),
        bn(channels),
        nn.ReLU(inplace=True),
    )


def _conv_block(channels: int) -> nn.Sequential:
    # 3x3 stride-2 convolution, exact inverse of the deconvolution's scaling
    return nn.Sequential(
        nn.Conv2d(channels, channels, 3, stride=2, padding=1, bias=False),
        bn(channels),
        nn.ReLU(inplace=True),
    )


class UpProjection(nn.Module):
    """Back-projection upsampling: refine the upsample with its own error.

    h0 = Deconv(x); l0 = Conv(h0); h1 = Deconv(l0 - x); out = h0 + h1.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.up1 = _deconv_block(channels)
        self.down = _conv_block(channels)
        self.up2 = _deconv_block(channels)

    def forward(self, x):
        h0 = self.up1(x)
        l0 = self.down(h0)
        return h0 + self.up2(l0 - x)


class DownProjection(nn.Module):
    """Mirror of UpProjection for the 2-stage chain: 0.5x with error feedback."""

    def __init__(self, channels: int):
        super().__init__()
        self.down1 = _conv_block(channels)
        self.up = _deconv_block(channels)
        self.down2 = _conv_block(channels)

    def forward(self, x):
        l0 = self.down1(x)
        h0 = self.up(l0)
        return l0 + self.down2(h0 - x)


class Upsampler(nn.Module):
    """2x upsampling head over concat(features, quarter heatmap).

    Returns (half-scale heatmap, half-scale multi-channel features); the
    heatmap is a 1x1 projection of the features, which also feed the
    coordinate head.
    """

    def __init__(self, feature_channels: int, variant: UpsampleVariant):
        super().__init__()
        if not isinstance(variant, UpsampleVariant):
            raise ValueError(f"unknown upsample variant: {variant!r}")
        self.variant = variant
        channels = feature_channels + 1
        self.out_channels = channels
        if variant is UpsampleVariant.DECONV_BLOCK:
            self.body = _deconv_block(channels)
        elif variant is UpsampleVariant.UPU:
            self.body = UpProjection(channels)
        else:
            self.body = nn.Sequential(
                UpProjection(channels),
                DownProjection(channels),
                UpProjection(channels),
            )
        self.to_heatmap = nn.Conv2d(channels, 1, 1)

    def forward(self, low: torch.Tensor, features: torch.Tensor):
        if low.shape[-2:] != features.shape[-2:]:
            raise ValueError(
                f"heatmap {tuple(low.shape[-2:])} and features {tuple(features.shape[-2:])} "
                "must share spatial size"
            )
        x = torch.cat([features, low], dim=1)
        up = self.body(x)
        return self.to_heatmap(up), up


class QuarterHead(nn.Module):
    """1x1 projection of backbone features to the coarse heatmap."""

    def __init__(self, feature_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(feature_channels, 1, 1)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.conv(features)


class CoordHead(nn.Module):
    """Per-cell (confidence, offset_x, offset_y) regression planes."""

    def __init__(self, in_channels: int):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(in_channels, in_channels, 3, padding=1, bias=False),
            bn(in_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(in_channels, 3, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)

    @staticmethod
    def to_grid(planes: torch.Tensor) -> GridPrediction:
        """Split a (3, H, W) or (1, 3, H, W) output into a GridPrediction."""
        if planes.ndim == 4:
            if planes.shape[0] != 1:
                raise ValueError(f"expected a single sample, got batch of {planes.shape[0]}")
            planes = planes[0]
        return GridPrediction(confidence=planes[0], offset_x=planes[1], offset_y=planes[2])


def _as_float64(values) -> np.ndarray:
    if isinstance(values, torch.Tensor):
        values = values.detach().cpu().numpy()
    return np.asarray(values, dtype=np.float64)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # evaluated in float64; stable on both tails
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def decode(pred: GridPrediction, cell_size: float) -> VPPrediction:
    """Decode the highest-confidence cell into an input-pixel point.

    The responsible cell is the argmax of sigmoid(confidence), ties broken by
    lowest row-major index. The point is (sigmoid(offset) + corner) * cell_size
    per axis, so it always lands inside the winning cell.
    """
    conf = _as_float64(pred.confidence)
    if conf.size == 0:
        raise ValueError("empty prediction grid")
    probs = sigmoid(conf)
    row, col = np.unravel_index(int(np.argmax(probs)), probs.shape)
    ox = float(sigmoid(_as_float64(pred.offset_x)[row, col]))
    oy = float(sigmoid(_as_float64(pred.offset_y)[row, col]))
    return VPPrediction(
        x=(col + ox) * cell_size,
        y=(row + oy) * cell_size,
        confidence=float(probs[row, col]),
        cell=(int(row), int(col)),
    )


def decode_heatmap_argmax(heatmap, stride: int) -> VPPrediction:
    """Peak-cell decoding for heatmap-only inference: cell centers scaled to pixels."""
    values = _as_float64(heatmap)
    if values.ndim > 2:
        values = values.reshape(values.shape[-2:])
    if values.size == 0:
        raise ValueError("empty heatmap")
    row, col = np.unravel_index(int(np.argmax(values)), values.shape)
    return VPPrediction(
        x=(col + 0.5) * stride,
        y=(row + 0.5) * stride,
        confidence=float(values[row, col]),
        cell=(int(row), int(col)),
    )

"""Shared convolution blocks and weight initialization for the backbones."""

from __future__ import annotations

import torch
import torch.nn as nn

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


class DepthwiseSeparableConv(nn.Module):
    """3x3 depthwise convolution followed by a 1x1 pointwise convolution.

    Drop-in replacement for a plain 3x3 convolution: same input/output
    channels, stride and spatial behaviour, strictly fewer weights
    (9*C_in + C_in*C_out instead of 9*C_in*C_out). No expansion layer and
    no normalization between the two convolutions, so any surrounding
    BatchNorm/ReLU of the host block applies unchanged.
    """

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.depthwise = nn.Conv2d(
            in_channels, in_channels, kernel_size=3, stride=stride,
            padding=1, groups=in_channels, bias=False,
        )
        self.pointwise = nn.Conv2d(in_channels, out_channels, kernel_size=1, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pointwise(self.depthwise(x))


def conv3x3(in_channels: int, out_channels: int, stride: int = 1, depthwise: bool = False) -> nn.Module:
    """3x3 convolution with padding, optionally depthwise-separable."""
    if depthwise:
        return DepthwiseSeparableConv(in_channels, out_channels, stride)
    return nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1, bias=False)


def bn(channels: int) -> nn.BatchNorm2d:
    return nn.BatchNorm2d(channels, momentum=BN_MOMENTUM, eps=BN_EPS)


def init_weights(module: nn.Module) -> None:
    """Fan-based init for convolutions, unit scale / zero shift for norms.

    Applied uniformly to backbones and heads so two builds under the same
    torch seed produce identical parameters.
    """
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def init_prediction_layer(conv: nn.Conv2d, std: float = 1e-3) -> None:
    """Near-zero init for final prediction convolutions.

    Keeps initial heatmaps and logits close to zero so the first optimizer
    steps are well-scaled at the default learning rates.
    """
    nn.init.normal_(conv.weight, std=std)
    if conv.bias is not None:
        nn.init.zeros_(conv.bias)


def parameter_count(module: nn.Module) -> int:
    """Total trainable scalar parameters of a built module."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)

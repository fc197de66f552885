"""Stacked encoder-decoder trunk exposing the same 1/4-scale feature contract."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .common import bn


class Residual(nn.Module):
    """Bottleneck residual block (channels -> channels/2 -> channels)."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        mid = max(out_channels // 2, 1)
        self.bn1 = bn(in_channels)
        self.conv1 = nn.Conv2d(in_channels, mid, 1, bias=False)
        self.bn2 = bn(mid)
        self.conv2 = nn.Conv2d(mid, mid, 3, padding=1, bias=False)
        self.bn3 = bn(mid)
        self.conv3 = nn.Conv2d(mid, out_channels, 1, bias=False)
        self.relu = nn.ReLU(inplace=True)
        if in_channels != out_channels:
            self.skip = nn.Conv2d(in_channels, out_channels, 1, bias=False)
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        out = self.conv1(self.relu(self.bn1(x)))
        out = self.conv2(self.relu(self.bn2(out)))
        out = self.conv3(self.relu(self.bn3(out)))
        return out + self.skip(x)


class HourglassModule(nn.Module):
    """Recursive pool/upsample module with skip branches at each depth."""

    def __init__(self, depth: int, channels: int):
        super().__init__()
        self.up1 = Residual(channels, channels)
        self.pool = nn.MaxPool2d(2, 2)
        self.low1 = Residual(channels, channels)
        if depth > 1:
            self.low2 = HourglassModule(depth - 1, channels)
        else:
            self.low2 = Residual(channels, channels)
        self.low3 = Residual(channels, channels)

    def forward(self, x):
        up = self.up1(x)
        low = self.low3(self.low2(self.low1(self.pool(x))))
        return up + F.interpolate(low, size=up.shape[-2:], mode="nearest")


class HourglassNet(nn.Module):
    """Stacked hourglass feature extractor, width channels at 1/4 scale."""

    def __init__(self, width: int = 48, stacks: int = 4, depth: int = 4):
        super().__init__()
        self.width = width
        self.out_channels = width

        self.stem = nn.Sequential(
            nn.Conv2d(3, 64, 7, stride=2, padding=3, bias=False),
            bn(64),
            nn.ReLU(inplace=True),
            Residual(64, 128),
            nn.MaxPool2d(2, 2),
            Residual(128, 128),
            Residual(128, width),
        )
        self.stacks = nn.ModuleList(
            nn.Sequential(
                HourglassModule(depth, width),
                Residual(width, width),
                nn.Conv2d(width, width, 1, bias=False),
                bn(width),
                nn.ReLU(inplace=True),
            )
            for _ in range(stacks)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.stem(x)
        for stack in self.stacks:
            x = x + stack(x)
        return x

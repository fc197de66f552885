"""High-resolution multi-branch trunk, stock or with depthwise-separable blocks.

The network keeps a full-resolution (1/4 of input) branch alive through four
stages while exchanging information with progressively coarser branches, and
returns the final high-resolution feature map. The modified variant swaps
every 3x3 convolution inside the residual/basic blocks for a depthwise 3x3 +
pointwise 1x1 pair; the stem, the 1x1 convolutions and the transition/fusion
layers stay standard.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .common import bn, conv3x3


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, inplanes, planes, stride=1, downsample=None, depthwise=False):
        super().__init__()
        self.conv1 = conv3x3(inplanes, planes, stride, depthwise=depthwise)
        self.bn1 = bn(planes)
        self.relu = nn.ReLU(inplace=True)
        self.conv2 = conv3x3(planes, planes, depthwise=depthwise)
        self.bn2 = bn(planes)
        self.downsample = downsample

    def forward(self, x):
        residual = x
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        if self.downsample is not None:
            residual = self.downsample(x)
        return self.relu(out + residual)


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, inplanes, planes, stride=1, downsample=None, depthwise=False):
        super().__init__()
        self.conv1 = nn.Conv2d(inplanes, planes, kernel_size=1, bias=False)
        self.bn1 = bn(planes)
        self.conv2 = conv3x3(planes, planes, stride, depthwise=depthwise)
        self.bn2 = bn(planes)
        self.conv3 = nn.Conv2d(planes, planes * self.expansion, kernel_size=1, bias=False)
        self.bn3 = bn(planes * self.expansion)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = downsample

    def forward(self, x):
        residual = x
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        if self.downsample is not None:
            residual = self.downsample(x)
        return self.relu(out + residual)


class HighResolutionModule(nn.Module):
    """Parallel branches of residual blocks followed by all-to-all fusion."""

    def __init__(self, num_branches, num_blocks, channels, depthwise, multi_scale_output=True):
        super().__init__()
        self.num_branches = num_branches
        self.multi_scale_output = multi_scale_output
        self.branches = nn.ModuleList(
            self._make_branch(channels[i], num_blocks, depthwise) for i in range(num_branches)
        )
        self.fuse_layers = self._make_fuse_layers(channels)
        self.relu = nn.ReLU(inplace=True)

    @staticmethod
    def _make_branch(channels, num_blocks, depthwise):
        return nn.Sequential(
            *(BasicBlock(channels, channels, depthwise=depthwise) for _ in range(num_blocks))
        )

    def _make_fuse_layers(self, channels):
        if self.num_branches == 1:
            return None
        num_out = self.num_branches if self.multi_scale_output else 1
        fuse_layers = []
        for i in range(num_out):
            layer = []
            for j in range(self.num_branches):
                if j > i:
                    # coarser-to-finer: 1x1 channel match, upsampled at forward time
                    layer.append(nn.Sequential(
                        nn.Conv2d(channels[j], channels[i], 1, bias=False),
                        bn(channels[i]),
                    ))
                elif j == i:
                    layer.append(nn.Identity())
                else:
                    # finer-to-coarser: chain of stride-2 3x3 convolutions
                    steps = []
                    for k in range(i - j):
                        out_ch = channels[i] if k == i - j - 1 else channels[j]
                        steps.append(nn.Conv2d(channels[j], out_ch, 3, stride=2, padding=1, bias=False))
                        steps.append(bn(out_ch))
                        if k < i - j - 1:
                            steps.append(nn.ReLU(inplace=True))
                    layer.append(nn.Sequential(*steps))
            fuse_layers.append(nn.ModuleList(layer))
        return nn.ModuleList(fuse_layers)

    def forward(self, x):
        x = [branch(xi) for branch, xi in zip(self.branches, x)]
        if self.num_branches == 1:
            return x
        out = []
        for i, fuse_layer in enumerate(self.fuse_layers):
            y = None
            for j in range(self.num_branches):
                z = fuse_layer[j](x[j])
                if j > i:
                    z = F.interpolate(z, size=x[i].shape[-2:], mode="nearest")
                y = z if y is None else y + z
            out.append(self.relu(y))
        return out


# (num_modules, num_blocks) per stage; channels scale off the base width
_STAGE_MODULES = (1, 4, 3)
_STAGE_BLOCKS = 4
_STEM_CHANNELS = 64


class HRNet(nn.Module):
    """Four-stage high-resolution network returning width channels at 1/4 scale."""

    def __init__(self, width: int = 48, depthwise: bool = False):
        super().__init__()
        self.width = width
        self.out_channels = width

        self.conv1 = nn.Conv2d(3, _STEM_CHANNELS, 3, stride=2, padding=1, bias=False)
        self.bn1 = bn(_STEM_CHANNELS)
        self.conv2 = nn.Conv2d(_STEM_CHANNELS, _STEM_CHANNELS, 3, stride=2, padding=1, bias=False)
        self.bn2 = bn(_STEM_CHANNELS)
        self.relu = nn.ReLU(inplace=True)

        layer1 = []
        inplanes = _STEM_CHANNELS
        for i in range(4):
            downsample = None
            if inplanes != _STEM_CHANNELS * Bottleneck.expansion:
                downsample = nn.Sequential(
                    nn.Conv2d(inplanes, _STEM_CHANNELS * Bottleneck.expansion, 1, bias=False),
                    bn(_STEM_CHANNELS * Bottleneck.expansion),
                )
            layer1.append(Bottleneck(inplanes, _STEM_CHANNELS, downsample=downsample, depthwise=depthwise))
            inplanes = _STEM_CHANNELS * Bottleneck.expansion
        self.layer1 = nn.Sequential(*layer1)

        stage_channels = [
            [width, width * 2],
            [width, width * 2, width * 4],
            [width, width * 2, width * 4, width * 8],
        ]
        prev_channels = [inplanes]
        self.transitions = nn.ModuleList()
        self.stages = nn.ModuleList()
        for s, channels in enumerate(stage_channels):
            self.transitions.append(self._make_transition(prev_channels, channels))
            last_stage = s == len(stage_channels) - 1
            modules = []
            for m in range(_STAGE_MODULES[s]):
                single_out = last_stage and m == _STAGE_MODULES[s] - 1
                modules.append(HighResolutionModule(
                    len(channels), _STAGE_BLOCKS, channels, depthwise,
                    multi_scale_output=not single_out,
                ))
            self.stages.append(nn.Sequential(*modules))
            prev_channels = channels

    @staticmethod
    def _make_transition(prev_channels, channels):
        transition = []
        for i, ch in enumerate(channels):
            if i < len(prev_channels):
                if prev_channels[i] != ch:
                    transition.append(nn.Sequential(
                        nn.Conv2d(prev_channels[i], ch, 3, padding=1, bias=False),
                        bn(ch),
                        nn.ReLU(inplace=True),
                    ))
                else:
                    transition.append(nn.Identity())
            else:
                transition.append(nn.Sequential(
                    nn.Conv2d(prev_channels[-1], ch, 3, stride=2, padding=1, bias=False),
                    bn(ch),
                    nn.ReLU(inplace=True),
                ))
        return nn.ModuleList(transition)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.relu(self.bn1(self.conv1(x)))
        x = self.relu(self.bn2(self.conv2(x)))
        x = self.layer1(x)

        feats = [x]
        for transition, stage in zip(self.transitions, self.stages):
            inputs = []
            for i, t in enumerate(transition):
                src = feats[i] if i < len(feats) else feats[-1]
                inputs.append(t(src))
            feats = stage(inputs)
        return feats[0]

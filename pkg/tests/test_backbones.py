import pytest
import torch
import torch.nn as nn

from vanishnet.backbones import (
    BackboneConfig,
    BackboneKind,
    DepthwiseSeparableConv,
    build_backbone,
    parameter_count,
)
from vanishnet.backbones.hrnet import BasicBlock


@pytest.mark.parametrize("kind", list(BackboneKind))
@pytest.mark.parametrize("input_size", [128, 320])
def test_output_is_quarter_scale(kind, input_size):
    config = BackboneConfig(kind=kind, input_size=input_size, width=8)
    net = build_backbone(config, seed=0).eval()
    with torch.no_grad():
        out = net(torch.randn(1, 3, input_size, input_size))
    assert out.shape == (1, 8, input_size // 4, input_size // 4)


def test_depthwise_block_weight_arithmetic():
    # one substituted 3x3 at 48 channels: 3*3*48 + 48*48 vs 3*3*48*48
    separable = DepthwiseSeparableConv(48, 48)
    standard = nn.Conv2d(48, 48, 3, padding=1, bias=False)
    assert parameter_count(separable) == 3 * 3 * 48 + 48 * 48 == 2736
    assert parameter_count(standard) == 3 * 3 * 48 * 48 == 20736


def test_depthwise_block_preserves_shapes():
    torch.manual_seed(0)
    plain = BasicBlock(48, 48, depthwise=False).eval()
    separable = BasicBlock(48, 48, depthwise=True).eval()
    x = torch.randn(2, 48, 10, 10)
    with torch.no_grad():
        assert separable(x).shape == plain(x).shape == x.shape


def test_parameter_count_single_conv():
    conv = nn.Conv2d(2, 3, 1, bias=True)
    assert parameter_count(conv) == 2 * 3 + 3


def test_depthwise_variant_has_fewer_parameters():
    modified = build_backbone(BackboneConfig(BackboneKind.HRNET48_M, width=48), seed=0)
    stock = build_backbone(BackboneConfig(BackboneKind.HRNET48, width=48), seed=0)
    assert parameter_count(modified) < parameter_count(stock)


def test_build_is_deterministic_under_seed():
    config = BackboneConfig(BackboneKind.HRNET48_M, input_size=64, width=8)
    a = build_backbone(config, seed=7)
    b = build_backbone(config, seed=7)
    params_a = dict(a.named_parameters())
    params_b = dict(b.named_parameters())
    assert params_a.keys() == params_b.keys()
    for name, pa in params_a.items():
        assert torch.equal(pa, params_b[name]), name
    assert parameter_count(a) == parameter_count(b)


@pytest.mark.parametrize(
    "config",
    [
        BackboneConfig(input_size=100),  # not a multiple of the deepest stride
        BackboneConfig(width=0),
        BackboneConfig(width=-4),
        BackboneConfig(kind=BackboneKind.HOURGLASS4, stacks=0),
    ],
)
def test_invalid_configs_rejected(config):
    with pytest.raises(ValueError):
        build_backbone(config)


def test_unsupported_kind_rejected():
    config = BackboneConfig()
    config.kind = "resnet50"
    with pytest.raises(ValueError):
        build_backbone(config)

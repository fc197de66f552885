"""Training objective: weighted sum of coordinate, confidence and heatmap terms.

total = lambda_coord * l_coord + l_conf + lambda_h * (l_h1 + l_h2)

where l_conf already carries its per-cell weighting (the cell containing the
point vs. all others) and a mean reduction over cells, so the loss scale does
not depend on grid size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass
class LossConfig:
    lambda_coord: float = 2.0
    lambda_h: float = 1.0
    lambda_conf_pos: float = 1.0
    lambda_conf_neg: float = 0.5

    def validate(self) -> None:
        for name in ("lambda_coord", "lambda_h", "lambda_conf_pos", "lambda_conf_neg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass
class LossBreakdown:
    l_coord: float
    l_conf: float
    l_h1: float
    l_h2: float
    total: float

    def to_floats(self) -> "LossBreakdown":
        def as_float(v):
            return float(v.detach()) if hasattr(v, "detach") else float(v)

        return LossBreakdown(*(as_float(getattr(self, f)) for f in ("l_coord", "l_conf", "l_h1", "l_h2", "total")))


def heatmap_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error between a predicted and a target heatmap."""
    if pred.shape != target.shape:
        raise ValueError(f"heatmap shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).mean()


def confidence_loss(conf_logits: torch.Tensor, vp_cell: tuple[int, int], config: LossConfig) -> torch.Tensor:
    """Weighted binary cross-entropy on sigmoid(confidence), mean over cells.

    Target is 1 at the cell containing the point and 0 elsewhere; the positive
    cell is weighted lambda_conf_pos, every other cell lambda_conf_neg.
    """
    row, col = vp_cell
    h, w = conf_logits.shape[-2:]
    if not (0 <= row < h and 0 <= col < w):
        raise ValueError(f"vp_cell {vp_cell} outside {h}x{w} grid")
    conf_logits = conf_logits.reshape(h, w)
    target = torch.zeros_like(conf_logits)
    target[row, col] = 1.0
    weight = torch.full_like(conf_logits, config.lambda_conf_neg)
    weight[row, col] = config.lambda_conf_pos
    bce = F.binary_cross_entropy_with_logits(conf_logits, target, reduction="none")
    return (weight * bce).sum() / conf_logits.numel()


def coordinate_loss(
    offset_x_logits: torch.Tensor,
    offset_y_logits: torch.Tensor,
    vp_scaled: tuple[float, float],
    cell_size: float,
) -> torch.Tensor:
    """Squared error of the sigmoid offsets at the cell containing the point.

    Only the ground-truth cell is supervised; the targets are the fractional
    position of the point within that cell.
    """
    x, y = vp_scaled
    h, w = offset_x_logits.shape[-2:]
    col = int(x / cell_size)
    row = int(y / cell_size)
    if x < 0 or y < 0 or row >= h or col >= w:
        raise ValueError(f"point {vp_scaled} outside the {h}x{w} grid at cell_size {cell_size}")
    tx = x / cell_size - col
    ty = y / cell_size - row
    px = torch.sigmoid(offset_x_logits.reshape(h, w)[row, col])
    py = torch.sigmoid(offset_y_logits.reshape(h, w)[row, col])
    return (px - tx) ** 2 + (py - ty) ** 2


def total_loss(l_coord, l_conf, l_h1, l_h2, config: LossConfig) -> LossBreakdown:
    """Assemble the weighted total; confidence weighting is already inside l_conf."""
    components = {"l_coord": l_coord, "l_conf": l_conf, "l_h1": l_h1, "l_h2": l_h2}
    for name, value in components.items():
        scalar = float(value.detach()) if hasattr(value, "detach") else float(value)
        if not math.isfinite(scalar):
            raise ValueError(f"non-finite loss component {name}: {scalar}")
    total = config.lambda_coord * l_coord + l_conf + config.lambda_h * (l_h1 + l_h2)
    return LossBreakdown(l_coord=l_coord, l_conf=l_conf, l_h1=l_h1, l_h2=l_h2, total=total)

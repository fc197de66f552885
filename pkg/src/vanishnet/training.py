"""Optimization loop: momentum SGD, split learning rates, step decay.

The backbone trains at a lower learning rate than the heads; both rates are
divided by decay_factor every decay_every epochs. Shuffling and augmentation
draw from stateless per-(seed, epoch, index) generators, so runs are
reproducible and checkpointed training resumes bit-identically.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .data import ImageSample, TrainTarget, augment, build_target, resize_with_annotation, to_tensor
from .losses import LossBreakdown, LossConfig, coordinate_loss, confidence_loss, heatmap_loss, total_loss
from .model import VPNet

# distinct stream tags so shuffling and augmentation never share draws
_SHUFFLE_TAG = 101
_AUGMENT_TAG = 202


class TrainingAbort(RuntimeError):
    """Raised when a loss component goes non-finite; names the component."""


@dataclass
class TrainConfig:
    lr_backbone: float = 0.001
    lr_rest: float = 0.01
    momentum: float = 0.9
    decay_factor: float = 10.0
    decay_every: int = 20
    epochs: int = 300
    batch_size: int = 8
    seed: int = 0


def lr_at(epoch: int, config) -> tuple[float, float]:
    """Learning rates at an epoch: base rates / decay_factor^(epoch // decay_every)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    scale = config.decay_factor ** (epoch // config.decay_every)
    return config.lr_backbone / scale, config.lr_rest / scale


def make_optimizer(model: VPNet, config) -> torch.optim.SGD:
    backbone, rest = model.parameter_groups()
    return torch.optim.SGD(
        [
            {"params": backbone, "lr": config.lr_backbone},
            {"params": rest, "lr": config.lr_rest},
        ],
        lr=config.lr_rest,
        momentum=config.momentum,
    )


def set_epoch_lr(optimizer: torch.optim.Optimizer, epoch: int, config) -> None:
    lr_backbone, lr_rest = lr_at(epoch, config)
    optimizer.param_groups[0]["lr"] = lr_backbone
    optimizer.param_groups[1]["lr"] = lr_rest


@dataclass
class Batch:
    images: torch.Tensor  # (B, 3, S, S)
    heatmaps_q: torch.Tensor  # (B, 1, S/4, S/4)
    heatmaps_h: torch.Tensor  # (B, 1, S/2, S/2)
    targets: list[TrainTarget]


def collate(pairs: list[tuple[ImageSample, TrainTarget]], dtype=torch.float32) -> Batch:
    images = torch.stack([to_tensor(s.image) for s, _ in pairs]).to(dtype)
    targets = [t for _, t in pairs]
    hq = torch.stack([torch.from_numpy(t.heatmap_q).to(dtype) for t in targets]).unsqueeze(1)
    hh = torch.stack([torch.from_numpy(t.heatmap_h).to(dtype) for t in targets]).unsqueeze(1)
    return Batch(images=images, heatmaps_q=hq, heatmaps_h=hh, targets=targets)


def prepare_sample(
    sample: ImageSample,
    config: RunConfig,
    rng: np.random.Generator | None = None,
) -> tuple[ImageSample, TrainTarget]:
    """Augment (optionally), resize to input resolution, build targets."""
    if rng is not None and config.augment:
        sample = augment(sample, rng)
    resized = resize_with_annotation(sample, config.input_size)
    target = build_target(resized, config.input_size, config.regression_scale_enum(), config.heatmap_std)
    return resized, target


def compute_losses(outputs, batch: Batch, config: RunConfig, loss_config: LossConfig) -> LossBreakdown:
    """Per-batch loss components; disabled branches contribute exact zeros."""
    zero = outputs.grid.sum() * 0.0
    l_h1 = heatmap_loss(outputs.heatmap_q, batch.heatmaps_q) if config.supervise_quarter else zero
    l_h2 = heatmap_loss(outputs.heatmap_h, batch.heatmaps_h) if config.supervise_half else zero
    l_conf = zero
    l_coord = zero
    if config.use_coordinate:
        cell_size = float(config.regression_scale_enum().stride)
        conf_terms = []
        coord_terms = []
        for i, target in enumerate(batch.targets):
            grid = outputs.grid[i]
            conf_terms.append(confidence_loss(grid[0], target.vp_cell, loss_config))
            coord_terms.append(coordinate_loss(grid[1], grid[2], target.vp_scaled, cell_size))
        l_conf = torch.stack(conf_terms).mean()
        l_coord = torch.stack(coord_terms).mean()
    return total_loss(l_coord, l_conf, l_h1, l_h2, loss_config)


def train_step(batch: Batch, model: VPNet, optimizer: torch.optim.Optimizer,
               config: RunConfig, loss_config: LossConfig | None = None) -> LossBreakdown:
    """One momentum-SGD update; returns the (detached) loss breakdown."""
    loss_config = loss_config or config.loss_config()
    outputs = model(batch.images)
    try:
        breakdown = compute_losses(outputs, batch, config, loss_config)
    except ValueError as exc:
        raise TrainingAbort(str(exc)) from None
    optimizer.zero_grad()
    breakdown.total.backward()
    optimizer.step()
    return breakdown.to_floats()


@dataclass
class Checkpoint:
    epoch: int
    model_state: dict
    optimizer_state: dict
    config: dict
    loss_history: list[dict]

    def save(self, path: Path | str) -> None:
        torch.save(asdict(self), path)


def load_checkpoint(path: Path | str) -> Checkpoint:
    payload = torch.load(path, map_location="cpu")
    return Checkpoint(**payload)


def load_model(checkpoint: Checkpoint) -> tuple[VPNet, RunConfig]:
    """Rebuild the model a checkpoint was trained with and restore parameters."""
    config = RunConfig(**checkpoint.config)
    model = VPNet(
        config.backbone_config(),
        upsample=config.upsample_variant(),
        regression_scale=config.regression_scale_enum(),
        seed=config.seed,
    )
    model.load_state_dict(checkpoint.model_state)
    return model, config


def fit(
    dataset: list[ImageSample],
    model: VPNet,
    config: RunConfig,
    resume: Checkpoint | None = None,
) -> Checkpoint:
    """Full training loop over original-resolution samples.

    Shuffle order and augmentation for epoch e, sample i depend only on
    (config.seed, e, i), so resuming from a checkpoint replays the exact
    stream an uninterrupted run would have seen.
    """
    if not dataset:
        raise ValueError("empty dataset")
    loss_config = config.loss_config()
    optimizer = make_optimizer(model, config)
    start_epoch = 0
    history: list[dict] = []
    if resume is not None:
        model.load_state_dict(resume.model_state)
        optimizer.load_state_dict(resume.optimizer_state)
        start_epoch = resume.epoch
        history = list(resume.loss_history)

    n = len(dataset)
    model.train()
    for epoch in range(start_epoch, config.epochs):
        set_epoch_lr(optimizer, epoch, config)
        order = np.random.default_rng([config.seed, epoch, _SHUFFLE_TAG]).permutation(n)
        sums = {"l_coord": 0.0, "l_conf": 0.0, "l_h1": 0.0, "l_h2": 0.0, "total": 0.0}
        steps = 0
        for lo in range(0, n, config.batch_size):
            idxs = order[lo:lo + config.batch_size]
            pairs = []
            for i in idxs:
                rng = np.random.default_rng([config.seed, epoch, int(i), _AUGMENT_TAG])
                pairs.append(prepare_sample(dataset[int(i)], config, rng))
            try:
                breakdown = train_step(collate(pairs), model, optimizer, config, loss_config)
            except TrainingAbort as exc:
                raise TrainingAbort(f"epoch {epoch}: {exc}") from None
            for key in sums:
                sums[key] += getattr(breakdown, key)
            steps += 1
        history.append({"epoch": epoch, **{k: v / steps for k, v in sums.items()}})

    return Checkpoint(
        epoch=config.epochs,
        model_state=model.state_dict(),
        optimizer_state=optimizer.state_dict(),
        config=asdict(config),
        loss_history=history,
    )


LOSS_CSV_HEADER = "epoch,l_coord,l_conf,l_h1,l_h2,total"


def write_loss_csv(history: list[dict], path: Path | str) -> None:
    lines = [LOSS_CSV_HEADER]
    for row in history:
        lines.append(",".join([str(row["epoch"])] + [repr(row[k]) for k in
                                                     ("l_coord", "l_conf", "l_h1", "l_h2", "total")]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

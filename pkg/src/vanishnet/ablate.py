"""Declarative ablation sweeps over backbone, supervision, upsampling, regression.

Each axis enumerates a fixed variant set; every variant trains and evaluates
under the same seed and budget, so row differences are attributable to the
axis alone. Emitted tables keep the reporting format of the corresponding
study (backbone rows carry accuracy counts and speeds, upsampling and
regression rows carry selector flags plus mean error, supervision rows carry
the full error distribution) and always record the desk-scale budget so the
numbers cannot be confused with full-scale results.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .config import ConfigError, RunConfig
from .data import ImageSample, synth_dataset
from .evaluation import EvalReport, Predictor, evaluate
from .model import DecodeMode, VPNet
from .training import fit


class AblationAxis(str, Enum):
    BACKBONE = "backbone"
    SUPERVISION = "supervision"
    UPSAMPLE = "upsample"
    REGRESSION = "regression"


@dataclass
class AblationBudget:
    epochs: int = 1
    dataset_size: int = 8
    seed: int = 0


@dataclass
class AblationSpec:
    axis: AblationAxis
    variants: list[tuple[str, dict]]
    budget: AblationBudget = field(default_factory=AblationBudget)


_AXIS_VARIANTS: dict[AblationAxis, list[tuple[str, dict]]] = {
    AblationAxis.BACKBONE: [
        ("hourglass4", {"backbone": "hourglass4"}),
        ("hrnet48", {"backbone": "hrnet48"}),
        ("hrnet48m", {"backbone": "hrnet48m"}),
    ],
    AblationAxis.SUPERVISION: [
        ("quarter_only", {"supervise_quarter": True, "supervise_half": False, "regression_scale": "quarter"}),
        ("half_only", {"supervise_quarter": False, "supervise_half": True, "regression_scale": "half"}),
        ("fused_quarter", {"supervise_quarter": True, "supervise_half": True, "regression_scale": "quarter"}),
        ("fused_half", {"supervise_quarter": True, "supervise_half": True, "regression_scale": "half"}),
    ],
    AblationAxis.UPSAMPLE: [
        ("deconv", {"upsample": "deconv"}),
        ("upu", {"upsample": "upu"}),
        ("upu2", {"upsample": "upu2"}),
    ],
    AblationAxis.REGRESSION: [
        ("heatmap", {"supervise_half": False, "use_coordinate": False}),
        ("multiscale", {"use_coordinate": False}),
        ("coordinate", {}),
    ],
}


def axis_variants(axis: AblationAxis) -> list[tuple[str, dict]]:
    """Canonical variant set (name, config overrides) for one study axis."""
    return [(name, dict(overrides)) for name, overrides in _AXIS_VARIANTS[axis]]


def default_spec(axis: AblationAxis, budget: AblationBudget | None = None) -> AblationSpec:
    return AblationSpec(axis=axis, variants=axis_variants(axis), budget=budget or AblationBudget())


def regression_variant(kind: str) -> DecodeMode:
    """Inference decoder for a regression study variant."""
    modes = {
        "heatmap": DecodeMode.ARGMAX_QUARTER,
        "multiscale": DecodeMode.ARGMAX_HALF,
        "coordinate": DecodeMode.COORDINATE,
    }
    if kind not in modes:
        raise ValueError(f"unknown regression variant: {kind!r}")
    return modes[kind]


def _variant_config(base: RunConfig, overrides: dict) -> RunConfig:
    known = set(RunConfig.__dataclass_fields__)
    for key in overrides:
        if key not in known:
            raise ConfigError(f"unknown override key: {key}")
    return replace(base, **overrides)


def run_ablation(
    spec: AblationSpec,
    base_config: RunConfig,
    dataset: list[ImageSample] | None = None,
) -> list[dict]:
    """Train and evaluate every variant under identical seed and budget.

    All variant configs are validated before any training starts; a single
    invalid override rejects the whole sweep.
    """
    if not spec.variants:
        raise ValueError("ablation spec has no variants")
    budget = spec.budget
    configs = []
    for name, overrides in spec.variants:
        config = _variant_config(base_config, overrides)
        config = replace(config, epochs=budget.epochs, seed=budget.seed)
        config.validate()
        configs.append((name, config))

    if dataset is None:
        dataset = synth_dataset(budget.dataset_size, budget.seed)

    rows = []
    for name, config in configs:
        model = VPNet(
            config.backbone_config(),
            upsample=config.upsample_variant(),
            regression_scale=config.regression_scale_enum(),
            seed=config.seed,
        )
        fit(dataset, model, config)
        report, _ = evaluate(Predictor(model, config), dataset, device=config.device)
        rows.append(_make_row(spec.axis, name, config, report, budget))
    return rows


def _make_row(axis: AblationAxis, name: str, config: RunConfig,
              report: EvalReport, budget: AblationBudget) -> dict:
    row: dict = {"variant": name}
    if axis is AblationAxis.BACKBONE:
        row.update({
            "count_below_001": report.count_below_001,
            "count_failed": report.count_failed,
            "gpu_fps": report.fps if config.device == "gpu" else "",
            "cpu_fps": report.fps if config.device == "cpu" else "",
        })
    elif axis is AblationAxis.SUPERVISION:
        row.update({f"bin_{k:03d}": report.histogram[k] for k in range(len(report.histogram))})
        row["count_below_001"] = report.count_below_001
    elif axis is AblationAxis.UPSAMPLE:
        row.update({
            "w_deconv": name == "deconv",
            "w_upu": name == "upu",
            "w_upu2": name == "upu2",
            "mean_error": report.mean_error,
        })
    else:
        row.update({
            "w_heatmap": True,
            "w_multiscale": name in ("multiscale", "coordinate"),
            "w_coordinate": name == "coordinate",
            "mean_error": report.mean_error,
        })
    row.update({
        "budget_epochs": budget.epochs,
        "budget_images": budget.dataset_size,
        "budget_seed": budget.seed,
    })
    return row


def write_ablation_tables(axis: AblationAxis, rows: list[dict], out_dir: Path | str) -> Path:
    """Write table.csv and table.json under out_dir/<axis>_<timestamp>/."""
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_dir = Path(out_dir) / f"{axis.value}_{stamp}"
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "table.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    (run_dir / "table.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    return run_dir

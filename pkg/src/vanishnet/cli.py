"""Command-line surface: train, eval, predict, ablate, report, synth.

Exit codes: 0 on success, 2 for configuration errors (bad keys, missing
paths), 3 for runtime aborts (non-finite loss, failed inference). Every
command writes only under its output directory and persists the resolved
configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import cv2

from . import ablate as ablate_mod
from .config import ConfigError, RunConfig, load_config, save_config
from .data import ImageSample, load_dataset, save_dataset, synth_dataset
from .evaluation import (
    EvalReport,
    Predictor,
    compare_report,
    draw_overlay,
    evaluate,
    load_baselines,
    write_report,
)
from .model import VPNet
from .training import TrainingAbort, fit, load_checkpoint, load_model, write_loss_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _resolved_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for key in ("seed", "device", "epochs"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "data", None):
        overrides["train_annotations"] = args.data
        overrides["eval_annotations"] = args.data
    return dataclasses.replace(config, **overrides)


def _check_device(config: RunConfig) -> None:
    if config.device == "gpu":
        import torch

        if not torch.cuda.is_available():
            raise ConfigError("device: gpu requested but CUDA is not available")


def _build_model(config: RunConfig) -> VPNet:
    return VPNet(
        config.backbone_config(),
        upsample=config.upsample_variant(),
        regression_scale=config.regression_scale_enum(),
        seed=config.seed,
    )


def cmd_synth(args) -> int:
    samples = synth_dataset(args.n, args.seed, size=args.size)
    ann_path = save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {ann_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _resolved_config(args)
    config.validate(require=("train_annotations",))
    _check_device(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, out_dir / "resolved_config.toml")
    dataset = load_dataset(config.train_annotations)
    model = _build_model(config)
    checkpoint = fit(dataset, model, config)
    ckpt_path = out_dir / "checkpoint.pt"
    checkpoint.save(ckpt_path)
    write_loss_csv(checkpoint.loss_history, out_dir / "loss_history.csv")
    print(ckpt_path)
    return EXIT_OK


def cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    model, config = load_model(checkpoint)
    if args.device:
        config = dataclasses.replace(config, device=args.device)
    _check_device(config)
    dataset = load_dataset(args.data)
    report, records = evaluate(Predictor(model, config), dataset, device=config.device)
    out_dir = Path(args.out or config.out_dir)
    paths = write_report(report, records, out_dir)
    print(f"mean_error={report.mean_error:.6f} below_001={report.count_below_001} "
          f"failed={report.count_failed} fps={report.fps:.2f} n={report.n}")
    print(paths["json"])
    return EXIT_OK


def cmd_predict(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    model, config = load_model(checkpoint)
    image = cv2.imread(str(args.image), cv2.IMREAD_COLOR)
    if image is None:
        raise ConfigError(f"image: cannot decode {args.image}")
    sample_id = Path(args.image).stem
    truth = None
    if args.annotation:
        try:
            tx, ty = (float(v) for v in args.annotation.split(","))
        except ValueError:
            raise ConfigError(f"annotation: expected 'x,y', got {args.annotation!r}") from None
        truth = (tx, ty)
    sample = ImageSample(image=image, vp=truth or (0.0, 0.0), id=sample_id)
    pred = Predictor(model, config).predict(sample)
    print(f"{sample_id} {pred.x:.2f} {pred.y:.2f} {pred.confidence:.4f}")
    out_dir = Path(args.out or config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    overlay = draw_overlay(image, pred, truth)
    overlay_path = out_dir / f"{sample_id}_overlay.png"
    cv2.imwrite(str(overlay_path), overlay)
    print(overlay_path)
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _resolved_config(args)
    config.validate()
    _check_device(config)
    axis = ablate_mod.AblationAxis(args.axis)
    budget = ablate_mod.AblationBudget(epochs=args.epochs, dataset_size=args.n, seed=config.seed)
    spec = ablate_mod.default_spec(axis, budget)
    dataset = load_dataset(config.train_annotations) if config.train_annotations else None
    rows = ablate_mod.run_ablation(spec, config, dataset=dataset)
    run_dir = ablate_mod.write_ablation_tables(axis, rows, args.out or config.out_dir)
    save_config(config, run_dir / "resolved_config.toml")
    print(run_dir)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        payload = json.loads(Path(args.report).read_text(encoding="utf-8"))
        report = EvalReport(**payload)
    except (OSError, TypeError, ValueError) as exc:
        raise ConfigError(f"report: cannot parse {args.report}: {exc}") from None
    baselines = load_baselines(args.baselines)
    table = compare_report(report, baselines, label=args.label)
    print(table)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report_table.txt").write_text(table + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vanishnet",
                                     description="Road vanishing point detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory")
        p.add_argument("--device", choices=["cpu", "gpu"], default=None)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=160)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", help="training annotation file (overrides config)")
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="annotation file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--device", choices=["cpu", "gpu"], default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict on one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--annotation", help="ground truth as 'x,y' for the overlay")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="run one ablation axis")
    common(p)
    p.add_argument("--axis", required=True,
                   choices=[a.value for a in ablate_mod.AblationAxis])
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--n", type=int, default=8, help="synthetic dataset size")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="comparison table against shipped baselines")
    p.add_argument("--report", required=True, help="report.json from eval")
    p.add_argument("--baselines", default=None, help="baseline CSV (default: shipped)")
    p.add_argument("--label", default="ours")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingAbort, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

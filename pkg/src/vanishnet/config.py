"""Run configuration: defaults, TOML ingestion, validation, freezing.

Every field has a default except the data paths. The defaults are a
desk-scale profile (small input and width) that trains in minutes on a CPU;
`configs/paper.toml` in the repository carries the full-scale settings.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backbones import BackboneConfig, BackboneKind
from .heads import Scale, UpsampleVariant
from .losses import LossConfig
from .model import DecodeMode


class ConfigError(ValueError):
    """Invalid or incomplete run configuration; names the offending key."""


@dataclass
class RunConfig:
    # backbone
    backbone: str = "hrnet48m"
    input_size: int = 64
    width: int = 16
    stacks: int = 4
    # heads
    upsample: str = "upu"
    regression_scale: str = "half"
    # supervision / regression variant switches
    supervise_quarter: bool = True
    supervise_half: bool = True
    use_coordinate: bool = True
    # loss weights
    lambda_coord: float = 2.0
    lambda_h: float = 1.0
    lambda_conf_pos: float = 1.0
    lambda_conf_neg: float = 0.5
    # optimization
    lr_backbone: float = 0.001
    lr_rest: float = 0.01
    momentum: float = 0.9
    decay_factor: float = 10.0
    decay_every: int = 20
    epochs: int = 300
    batch_size: int = 8
    augment: bool = True
    # data
    train_annotations: str = ""
    eval_annotations: str = ""
    heatmap_std: float = 3.0
    # run
    seed: int = 0
    out_dir: str = "runs/default"
    device: str = "cpu"

    # ---- typed views -------------------------------------------------

    def backbone_config(self) -> BackboneConfig:
        try:
            kind = BackboneKind(self.backbone)
        except ValueError:
            raise ConfigError(f"backbone: unknown kind {self.backbone!r}") from None
        return BackboneConfig(kind=kind, input_size=self.input_size, width=self.width, stacks=self.stacks)

    def upsample_variant(self) -> UpsampleVariant:
        try:
            return UpsampleVariant(self.upsample)
        except ValueError:
            raise ConfigError(f"upsample: unknown variant {self.upsample!r}") from None

    def regression_scale_enum(self) -> Scale:
        try:
            return Scale(self.regression_scale)
        except ValueError:
            raise ConfigError(f"regression_scale: must be quarter or half, got {self.regression_scale!r}") from None

    def loss_config(self) -> LossConfig:
        return LossConfig(
            lambda_coord=self.lambda_coord,
            lambda_h=self.lambda_h,
            lambda_conf_pos=self.lambda_conf_pos,
            lambda_conf_neg=self.lambda_conf_neg,
        )

    def decode_mode(self) -> DecodeMode:
        if self.use_coordinate:
            return DecodeMode.COORDINATE
        if self.supervise_half:
            return DecodeMode.ARGMAX_HALF
        return DecodeMode.ARGMAX_QUARTER

    # ---- validation ---------------------------------------------------

    def validate(self, require: tuple[str, ...] = ()) -> None:
        """Check invariants; `require` lists data-path fields that must exist."""
        try:
            self.backbone_config().validate()
            self.upsample_variant()
            self.regression_scale_enum()
            self.loss_config().validate()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name, value in (("lr_backbone", self.lr_backbone), ("lr_rest", self.lr_rest),
                            ("momentum", self.momentum), ("decay_factor", self.decay_factor)):
            if value <= 0 and name != "momentum" or value < 0:
                raise ConfigError(f"{name}: must be positive, got {value}")
        if self.decay_every < 1:
            raise ConfigError(f"decay_every: must be >= 1, got {self.decay_every}")
        if self.epochs < 1:
            raise ConfigError(f"epochs: must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.heatmap_std <= 0:
            raise ConfigError(f"heatmap_std: must be positive, got {self.heatmap_std}")
        if self.device not in ("cpu", "gpu"):
            raise ConfigError(f"device: must be cpu or gpu, got {self.device!r}")
        if not (self.supervise_quarter or self.supervise_half or self.use_coordinate):
            raise ConfigError("supervision: at least one loss term must be enabled")
        for key in require:
            value = getattr(self, key)
            if not value:
                raise ConfigError(f"{key}: required but not set")
            if not Path(value).exists():
                raise ConfigError(f"{key}: path does not exist: {value}")


_SECTIONS = {
    "backbone": ("backbone", "input_size", "width", "stacks"),
    "heads": ("upsample", "regression_scale", "supervise_quarter", "supervise_half", "use_coordinate"),
    "loss": ("lambda_coord", "lambda_h", "lambda_conf_pos", "lambda_conf_neg"),
    "train": ("lr_backbone", "lr_rest", "momentum", "decay_factor", "decay_every",
              "epochs", "batch_size", "augment"),
    "data": ("train_annotations", "eval_annotations", "heatmap_std"),
}
_TOP_LEVEL = ("seed", "out_dir", "device")


def _coerce(name: str, value, target_type):
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return value
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    return value


def load_config(path: Path | str) -> RunConfig:
    """Parse a TOML run file; unknown keys are rejected by name."""
    try:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    flat: dict[str, object] = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            for sub, subval in value.items():
                flat[f"{key}.{sub}"] = subval
        else:
            flat[key] = value
    field_types = {f.name: f.type for f in fields(RunConfig)}
    defaults = RunConfig()
    values = {}
    for key, value in flat.items():
        name = key.split(".")[-1]
        if name == "kind":
            name = "backbone"
        if name not in field_types:
            raise ConfigError(f"unknown config key: {key}")
        target_type = type(getattr(defaults, name))
        values[name] = _coerce(key, value, target_type)
    return replace(defaults, **values)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump_config(config: RunConfig) -> str:
    """Serialize to TOML; load_config on the result reproduces the config."""
    data = asdict(config)
    lines = []
    for name in _TOP_LEVEL:
        lines.append(f"{name} = {_toml_value(data[name])}")
    for section, names in _SECTIONS.items():
        lines.append("")
        lines.append(f"[{section}]")
        for name in names:
            key = "kind" if name == "backbone" else name
            lines.append(f"{key} = {_toml_value(data[name])}")
    return "\n".join(lines) + "\n"


def save_config(config: RunConfig, path: Path | str) -> None:
    Path(path).write_text(dump_config(config), encoding="utf-8")

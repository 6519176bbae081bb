"""Dataclass configs for models, losses, and training, plus YAML loading.

Config files are YAML with nested sections (``data``, ``tokenizer``,
``generator``, ``discriminator``, ``train``). Schema violations are
reported with dotted key paths so a bad file is easy to fix.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

ABLATION_MODES = ("full", "no_self", "no_cross", "gan_only")
ADVERSARIAL_VARIANTS = ("saturating", "non_saturating")
DISTANCE_MODES = ("rowwise", "flat")


class ConfigError(ValueError):
    """Raised when a config file or config values violate the schema."""


@dataclass(frozen=True)
class TokenizerConfig:
    """Architecture of the frozen patch-token extractor."""

    image_size: int = 64
    patch_size: int = 8
    channels: int = 1
    dim: int = 32
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    seed: int = 0
    weights: str | None = None  # path to a saved extractor; None = scratch init

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid * self.grid

    def validate(self, prefix: str = "tokenizer") -> None:
        if self.image_size <= 0 or self.patch_size <= 0:
            raise ConfigError(f"{prefix}.image_size/patch_size: must be positive")
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"{prefix}.patch_size: {self.patch_size} does not divide "
                f"image_size {self.image_size}"
            )
        if self.channels <= 0:
            raise ConfigError(f"{prefix}.channels: must be positive")
        if self.dim <= 0 or self.depth <= 0:
            raise ConfigError(f"{prefix}.dim/depth: must be positive")
        if self.heads <= 0 or self.dim % self.heads != 0:
            raise ConfigError(f"{prefix}.heads: must be positive and divide dim")


@dataclass(frozen=True)
class GeneratorConfig:
    """Residual encoder-decoder translator."""

    channels: int = 1
    width: int = 16
    residual_blocks: int = 2

    def validate(self, prefix: str = "generator") -> None:
        if self.channels <= 0:
            raise ConfigError(f"{prefix}.channels: must be positive")
        if self.width <= 0:
            raise ConfigError(f"{prefix}.width: must be positive")
        if self.residual_blocks < 0:
            raise ConfigError(f"{prefix}.residual_blocks: must be >= 0")


@dataclass(frozen=True)
class DiscriminatorConfig:
    """MLP head over pooled extractor tokens. hidden=0 means one affine layer."""

    hidden: int = 64

    def validate(self, prefix: str = "discriminator") -> None:
        if self.hidden < 0:
            raise ConfigError(f"{prefix}.hidden: must be >= 0")


@dataclass(frozen=True)
class LossConfig:
    """Blend weights and distance mode for the token-matching loss."""

    alpha: float = 0.5
    lam: float = 8.0
    block_ids: tuple[int, ...] = (1, 2, 3)
    distance: str = "rowwise"
    # optional per-block weights; None = uniform 1/N
    block_weights: tuple[float, ...] | None = None

    def validate(self, prefix: str = "loss") -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"{prefix}.alpha: must be in [0, 1]")
        if self.lam < 0.0:
            raise ConfigError(f"{prefix}.lambda: must be >= 0")
        if len(self.block_ids) == 0:
            raise ConfigError(f"{prefix}.block_ids: need at least one block")
        if list(self.block_ids) != sorted(set(self.block_ids)):
            raise ConfigError(f"{prefix}.block_ids: must be strictly increasing")
        if self.distance not in DISTANCE_MODES:
            raise ConfigError(f"{prefix}.distance: must be one of {DISTANCE_MODES}")
        if self.block_weights is not None:
            if len(self.block_weights) != len(self.block_ids):
                raise ConfigError(
                    f"{prefix}.block_weights: length must match block_ids"
                )
            if any(w < 0 for w in self.block_weights):
                raise ConfigError(f"{prefix}.block_weights: must be >= 0")


@dataclass(frozen=True)
class DataConfig:
    dir_x: str | None = None
    dir_y: str | None = None
    image_size: int = 64
    channels: int = 1

    def validate(self, prefix: str = "data") -> None:
        if self.image_size <= 0:
            raise ConfigError(f"{prefix}.image_size: must be positive")
        if self.channels not in (1, 3):
            raise ConfigError(f"{prefix}.channels: must be 1 or 3")


@dataclass
class TrainConfig:
    """Everything one training run needs; serializable to/from YAML."""

    data: DataConfig = field(default_factory=DataConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    alpha: float = 0.5
    lam: float = 8.0
    block_ids: tuple[int, ...] = (1, 2, 3)
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    batch_size: int = 4
    epochs: int = 20
    seed: int = 0
    ablation: str = "full"
    adversarial: str = "saturating"
    checkpoint_every: int = 0  # 0 = final checkpoint only
    block_weights: tuple[float, ...] | None = None

    def validate(self) -> None:
        self.data.validate()
        self.tokenizer.validate()
        self.generator.validate()
        self.discriminator.validate()
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("train.alpha: must be in [0, 1]")
        if self.lam < 0.0:
            raise ConfigError("train.lambda: must be >= 0")
        if self.lr_g <= 0.0 or self.lr_d <= 0.0:
            raise ConfigError("train.lr_g/lr_d: must be positive")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size: must be >= 1")
        if self.epochs < 1:
            raise ConfigError("train.epochs: must be >= 1")
        if self.ablation not in ABLATION_MODES:
            raise ConfigError(f"train.ablation: must be one of {ABLATION_MODES}")
        if self.adversarial not in ADVERSARIAL_VARIANTS:
            raise ConfigError(
                f"train.adversarial: must be one of {ADVERSARIAL_VARIANTS}"
            )
        if self.checkpoint_every < 0:
            raise ConfigError("train.checkpoint_every: must be >= 0")
        if any(b < 0 or b >= self.tokenizer.depth for b in self.block_ids):
            raise ConfigError(
                f"train.block_ids: indices must lie in [0, {self.tokenizer.depth})"
            )
        if self.data.image_size != self.tokenizer.image_size:
            raise ConfigError(
                "data.image_size must equal tokenizer.image_size "
                f"({self.data.image_size} != {self.tokenizer.image_size})"
            )
        if self.data.channels != self.tokenizer.channels:
            raise ConfigError("data.channels must equal tokenizer.channels")
        if self.data.channels != self.generator.channels:
            raise ConfigError("data.channels must equal generator.channels")
        self.loss_config().validate("train")

    def replace(self, **overrides: Any) -> TrainConfig:
        """Copy with the given fields overridden."""
        return dataclasses.replace(self, **overrides)

    def loss_config(self) -> LossConfig:
        """Loss settings with the ablation mode folded into alpha/lambda."""
        alpha, lam = resolve_ablation(self.ablation, self.alpha, self.lam)
        return LossConfig(
            alpha=alpha,
            lam=lam,
            block_ids=tuple(self.block_ids),
            block_weights=self.block_weights,
        )

    def to_dict(self) -> dict[str, Any]:
        raw = dataclasses.asdict(self)
        train = {
            k: v
            for k, v in raw.items()
            if k not in ("data", "tokenizer", "generator", "discriminator")
        }
        train["lambda"] = train.pop("lam")
        for key in ("block_ids", "block_weights"):
            if train.get(key) is not None:
                train[key] = list(train[key])
        return {
            "data": raw["data"],
            "tokenizer": raw["tokenizer"],
            "generator": raw["generator"],
            "discriminator": raw["discriminator"],
            "train": train,
        }


def resolve_ablation(mode: str, alpha: float, lam: float) -> tuple[float, float]:
    """Map an ablation mode onto effective (alpha, lambda) overrides."""
    if mode == "full":
        return alpha, lam
    if mode == "no_self":
        return 0.0, lam
    if mode == "no_cross":
        return 1.0, lam
    if mode == "gan_only":
        return alpha, 0.0
    raise ConfigError(f"train.ablation: unknown mode {mode!r}")


def default_block_ids(depth: int, count: int = 3) -> tuple[int, ...]:
    """Evenly spaced block indices spanning shallow/middle/deep layers."""
    count = min(count, depth)
    if count == 1:
        return (depth - 1,)
    ids = sorted({round(i * (depth - 1) / (count - 1)) for i in range(count)})
    return tuple(ids)


_SECTION_TYPES = {
    "data": DataConfig,
    "tokenizer": TokenizerConfig,
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
}

# YAML key -> dataclass field for spellings that are not valid identifiers
_TRAIN_ALIASES = {"lambda": "lam"}
_LIST_FIELDS = {"block_ids": int, "block_weights": float}


def _coerce(value: Any, target, path: str) -> Any:
    if value is None:
        return None
    if target is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected integer, got {value!r}")
        return value
    if target is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {value!r}")
        return float(value)
    if target is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {value!r}")
        return value
    return value


_NESTED_FIELDS = ("data", "tokenizer", "generator", "discriminator")


def _build_section(cls, raw: dict[str, Any], prefix: str, aliases=None):
    aliases = aliases or {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        name = aliases.get(key, key)
        if name not in fields or (cls is TrainConfig and name in _NESTED_FIELDS):
            raise ConfigError(f"{prefix}.{key}: unknown key")
        path = f"{prefix}.{key}"
        if name in _LIST_FIELDS:
            if value is None:
                kwargs[name] = None
                continue
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{path}: expected a list")
            elem = _LIST_FIELDS[name]
            kwargs[name] = tuple(_coerce(v, elem, path) for v in value)
            continue
        # field annotations are strings under `from __future__ import annotations`
        base = str(fields[name].type).replace(" | None", "").strip()
        if base == "int":
            kwargs[name] = _coerce(value, int, path)
        elif base == "float":
            kwargs[name] = _coerce(value, float, path)
        elif base == "str":
            kwargs[name] = _coerce(value, str, path)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def train_config_from_dict(raw: dict[str, Any]) -> TrainConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a mapping")
    known = set(_SECTION_TYPES) | {"train"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown section")
    sections: dict[str, Any] = {}
    for name, cls in _SECTION_TYPES.items():
        body = raw.get(name, {}) or {}
        if not isinstance(body, dict):
            raise ConfigError(f"{name}: expected a mapping")
        sections[name] = _build_section(cls, body, name)
    train_raw = raw.get("train", {}) or {}
    if not isinstance(train_raw, dict):
        raise ConfigError("train: expected a mapping")
    cfg = _build_section(
        TrainConfig, dict(train_raw), "train", aliases=_TRAIN_ALIASES
    )
    cfg = dataclasses.replace(cfg, **sections)
    cfg.validate()
    return cfg


def load_train_config(path: str | Path) -> TrainConfig:
    """Parse and validate a YAML training config."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if raw is None:
        raw = {}
    return train_config_from_dict(raw)


def save_train_config(config: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))

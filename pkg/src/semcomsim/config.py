"""Experiment configuration: TOML in, validated dataclasses out."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Malformed configuration; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class DataConfig:
    family: str = "shapes"
    directory: Optional[str] = None  # overrides the synthetic family when set
    train_count: int = 512
    test_count: int = 64
    image_size: int = 32


@dataclass(frozen=True)
class EmbeddingConfig:
    channels: int = 16
    spatial: int = 2
    standardize: bool = True


@dataclass(frozen=True)
class VQSection:
    latent_channels: int = 8
    codebook_size: int = 256
    commitment_beta: float = 0.25
    steps: int = 3000
    batch_size: int = 8
    lr: float = 2e-3


@dataclass(frozen=True)
class EncoderSection:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3


@dataclass(frozen=True)
class DiffusionSection:
    timesteps: int = 1000
    sample_steps: int = 20
    steps: int = 5000
    batch_size: int = 4
    lr: float = 1e-4
    lr_final: Optional[float] = None
    snr_min: float = 1.0
    snr_max: float = 20.0
    width: int = 64
    checkpoint_every: int = 1000


@dataclass(frozen=True)
class EvalConfig:
    snr_grid: tuple = (1.0, 5.0, 10.0, 15.0, 20.0)
    samples: int = 100
    repeats: int = 25
    predictability_snr: float = 20.0
    power_convention: str = "fixed_unit"


@dataclass(frozen=True)
class BaselineConfig:
    quality: int = 75
    ldpc_n: int = 1024
    qam_order: int = 4
    max_iters: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    vq: VQSection = field(default_factory=VQSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    eval: EvalConfig = field(default_factory=EvalConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]

    def to_toml(self) -> str:
        return tomli_w.dumps(_drop_none(self.to_dict()))

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with per-section overrides, e.g. ``replace(diffusion={"steps": 10})``."""
        data = self.to_dict()
        for key, val in sections.items():
            if isinstance(val, dict):
                data.setdefault(key, {}).update(val)
            else:
                data[key] = val
        return from_dict(data)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _drop_none(d: dict) -> dict:
    return {k: _drop_none(v) if isinstance(v, dict) else v for k, v in d.items() if v is not None}


def _coerce(path: str, value, tp):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(path, value, args[0])
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if tp is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list of numbers, got {value!r}")
        return tuple(_coerce(f"{path}[{i}]", v, float) for i, v in enumerate(value))
    raise TypeError(f"unsupported config type {tp!r} at {path}")


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected a table, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown field")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        sub = f"{path}.{f.name}" if path else f.name
        tp = hints[f.name]
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, data[f.name], sub)
        else:
            kwargs[f.name] = _coerce(sub, data[f.name], tp)
    return cls(**kwargs)


def _check(cfg: ExperimentConfig) -> None:
    def positive(path, v):
        if not v > 0:
            raise ConfigError(path, f"must be positive, got {v!r}")

    for sec in ("vq", "encoder", "diffusion"):
        s = getattr(cfg, sec)
        positive(f"{sec}.batch_size", s.batch_size)
        positive(f"{sec}.lr", s.lr)
        if s.steps < 0:
            raise ConfigError(f"{sec}.steps", f"must be >= 0, got {s.steps}")
    positive("data.image_size", cfg.data.image_size)
    positive("data.train_count", cfg.data.train_count)
    positive("data.test_count", cfg.data.test_count)
    if cfg.data.image_size % 16:
        raise ConfigError("data.image_size", "must be a multiple of 16")
    if cfg.embedding.spatial not in {cfg.data.image_size // 16, cfg.data.image_size // 8}:
        raise ConfigError("embedding.spatial", "must be image_size/16 or image_size/8")
    d = cfg.diffusion
    if not 1 <= d.sample_steps <= d.timesteps:
        raise ConfigError("diffusion.sample_steps", f"must be in [1, {d.timesteps}]")
    if d.snr_min > d.snr_max:
        raise ConfigError("diffusion.snr_min", "exceeds diffusion.snr_max")
    if math.isinf(d.snr_min) != math.isinf(d.snr_max):
        raise ConfigError("diffusion.snr_min", "an infinite (clean) range needs both ends infinite")
    if not cfg.eval.snr_grid:
        raise ConfigError("eval.snr_grid", "must not be empty")
    if cfg.eval.repeats < 2:
        raise ConfigError("eval.repeats", "need at least 2 repeats for pairwise statistics")
    if cfg.eval.power_convention not in ("fixed_unit", "empirical_per_transmission"):
        raise ConfigError("eval.power_convention", f"unknown convention {cfg.eval.power_convention!r}")
    if cfg.baseline.qam_order not in (4, 16):
        raise ConfigError("baseline.qam_order", "must be 4 or 16")
    if not 1 <= cfg.baseline.quality <= 100:
        raise ConfigError("baseline.quality", "must be in [1, 100]")


def from_dict(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "")
    _check(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    return from_dict(data)

"""Compact semantic encoder: image -> embedding Z, the only transmitted payload.

Pretrained with a self-supervised proxy (thumbnail reconstruction through a
linear head plus augmentation consistency), then frozen.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import batches
from .metrics import compression_ratio
from .nn import Conv2d, GroupNorm, Linear, Module
from .optim import AdamW
from .tensor import ShapeError, Tensor

log = logging.getLogger(__name__)

THUMB = 8
# eps for the in-graph standardization; extract() standardizes exactly
_TRAIN_EPS = 1e-10


@dataclass(frozen=True)
class EmbeddingSpec:
    channels: int = 16
    spatial: int = 2
    standardize: bool = True

    @property
    def shape(self) -> tuple:
        return (self.channels, self.spatial, self.spatial)

    @property
    def size(self) -> int:
        return self.channels * self.spatial * self.spatial

    def validate(self, image_shape) -> None:
        c, h, w = image_shape
        if h != w or h % self.spatial or (h // self.spatial) & (h // self.spatial - 1):
            raise ValueError(f"image side {h} must be a power-of-two multiple of spatial {self.spatial}")
        if compression_ratio(image_shape, self.shape) <= 1:
            raise ValueError(f"embedding {self.shape} does not compress image {tuple(image_shape)}")


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray  # [C, s, s]

    @property
    def source_power(self) -> float:
        return float(np.mean(self.values ** 2))

    @property
    def shape(self) -> tuple:
        return self.values.shape


class SemanticEncoder(Module):
    def __init__(self, spec: EmbeddingSpec, image_size: int, rng: np.random.Generator,
                 image_channels: int = 3, width: int = 32, groups: int = 8):
        spec.validate((image_channels, image_size, image_size))
        self.spec = spec
        self.image_size = image_size
        self.image_channels = image_channels
        self.stem = Conv2d(image_channels, width, 3, rng)
        self.stem_norm = GroupNorm(groups, width)
        self.downs, self.norms = [], []
        cin = width
        for i in range(int(math.log2(image_size // spec.spatial))):
            cout = min(2 * cin, 4 * width) if i % 2 else cin
            self.downs.append(Conv2d(cin, cout, 3, rng, stride=2, padding=1))
            self.norms.append(GroupNorm(groups, cout))
            cin = cout
        self.head = Conv2d(cin, spec.channels, 1, rng)

    def features(self, x: Tensor) -> Tensor:
        """Un-standardized embedding."""
        want = (self.image_channels, self.image_size, self.image_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != want:
            raise ShapeError("extract", x.shape, (None,) + want)
        h = T.silu(self.stem_norm(self.stem(x)))
        for conv, norm in zip(self.downs, self.norms):
            h = T.silu(norm(conv(h)))
        return self.head(h)

    def forward(self, x: Tensor) -> Tensor:
        z = self.features(x)
        return T.group_norm(z, 1, eps=_TRAIN_EPS) if self.spec.standardize else z


def standardize(z: np.ndarray) -> np.ndarray:
    """Per-embedding zero mean, unit population variance over all of [C, s, s]."""
    axes = tuple(range(1, z.ndim))
    mu = z.mean(axis=axes, keepdims=True)
    sd = z.std(axis=axes, keepdims=True)
    return (z - mu) / np.where(sd > 0, sd, 1.0)


def extract(encoder: SemanticEncoder, x: np.ndarray) -> np.ndarray:
    """Embeddings [B, C, s, s] for a normalized image batch (or [C, s, s] for one image)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    z = encoder.features(Tensor(x[None] if single else x)).data
    if encoder.spec.standardize:
        z = standardize(z)
    return z[0] if single else z


def extract_embedding(encoder: SemanticEncoder, x: np.ndarray) -> Embedding:
    return Embedding(extract(encoder, x))


def thumbnail(x: np.ndarray) -> np.ndarray:
    """Block-mean THUMB x THUMB thumbnail of a [B, C, S, S] batch."""
    B, C, S, _ = x.shape
    k = S // THUMB
    return x.reshape(B, C, THUMB, k, THUMB, k).mean(axis=(3, 5))


def augment(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Mild photometric + geometric jitter: circular shift up to 2 px, gain, bias, pixel noise."""
    B = x.shape[0]
    out = np.empty_like(x)
    for i in range(B):
        dy, dx = rng.integers(-2, 3, size=2)
        out[i] = np.roll(x[i], (dy, dx), axis=(1, 2))
    gain = rng.uniform(0.85, 1.15, size=(B, 1, 1, 1))
    bias = rng.uniform(-0.1, 0.1, size=(B, 1, 1, 1))
    out = out * gain + bias + 0.03 * rng.standard_normal(x.shape)
    return np.clip(out, -1.0, 1.0)


class ThumbnailHead(Module):
    def __init__(self, spec: EmbeddingSpec, image_channels: int, rng: np.random.Generator):
        self.proj = Linear(spec.size, image_channels * THUMB * THUMB, rng)
        self.out_shape = (image_channels, THUMB, THUMB)

    def __call__(self, z: Tensor) -> Tensor:
        B = z.shape[0]
        return T.reshape(self.proj(T.reshape(z, (B, -1))), (B,) + self.out_shape)


@dataclass
class PretrainResult:
    encoder: SemanticEncoder
    head: ThumbnailHead
    losses: list


class _Joint(Module):
    def __init__(self, encoder, head):
        self.encoder = encoder
        self.head = head


def pretrain(encoder: SemanticEncoder, images: np.ndarray, steps: int, rng: np.random.Generator,
             batch_size: int = 8, lr: float = 1e-3, consistency_weight: float = 0.5,
             head: ThumbnailHead | None = None, log_every: int = 100) -> PretrainResult:
    """Train the encoder (and a throwaway linear thumbnail head) in place."""
    if len(images) == 0:
        raise ValueError("dataset is empty")
    if head is None:
        head = ThumbnailHead(encoder.spec, encoder.image_channels, rng)
    joint = _Joint(encoder, head)
    opt = AdamW(joint, lr=lr)
    order = batches(len(images), batch_size, rng)
    losses = []
    for step in range(steps):
        x = images[next(order)]
        target = Tensor(thumbnail(x))
        z1 = encoder.forward(Tensor(augment(x, rng)))
        z2 = encoder.forward(Tensor(augment(x, rng)))
        loss = T.mse(head(z1), target) + T.mse(head(z2), target) + consistency_weight * T.mse(z1, z2)
        if not np.isfinite(loss.data):
            raise FloatingPointError(f"encoder pretraining diverged at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
        if log_every and step % log_every == 0:
            log.info("pretrain-encoder step %d loss %.5f", step, losses[-1])
    return PretrainResult(encoder, head, losses)

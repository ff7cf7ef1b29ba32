"""Vector-quantized convolutional autoencoder (x4 spatial compression).

The decoder of this model is the receiver's final stage: whatever latent the
diffusion model produces is projected back to pixels through it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .nn import Conv2d, GroupNorm, Module
from .data import batches
from .optim import AdamW
from .tensor import ShapeError, Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VQConfig:
    image_channels: int = 3
    image_size: int = 32
    latent_channels: int = 8
    downsample_factor: int = 4
    codebook_size: int = 256
    commitment_beta: float = 0.25
    width: int = 32
    groups: int = 8
    dead_code_steps: int = 200

    def __post_init__(self):
        if self.downsample_factor != 4:
            raise ValueError("downsample_factor is fixed at 4")
        if self.image_size % self.downsample_factor:
            raise ValueError(f"image_size {self.image_size} not divisible by {self.downsample_factor}")
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")

    @property
    def latent_size(self) -> int:
        return self.image_size // self.downsample_factor

    @property
    def latent_shape(self) -> tuple:
        return (self.latent_channels, self.latent_size, self.latent_size)


class Encoding(NamedTuple):
    latent: Tensor           # quantized, straight-through
    indices: np.ndarray      # [B, h, w]
    codebook_loss: Tensor
    commitment_loss: Tensor
    pre_quant: Tensor


class VQModel(Module):
    def __init__(self, config: VQConfig, rng: np.random.Generator):
        self.config = config
        c, w, g = config.latent_channels, config.width, config.groups
        self.enc_in = Conv2d(config.image_channels, w, 3, rng)
        self.enc_n1 = GroupNorm(g, w)
        self.enc_down1 = Conv2d(w, 2 * w, 3, rng, stride=2, padding=1)
        self.enc_n2 = GroupNorm(g, 2 * w)
        self.enc_down2 = Conv2d(2 * w, 2 * w, 3, rng, stride=2, padding=1)
        self.enc_n3 = GroupNorm(g, 2 * w)
        self.enc_out = Conv2d(2 * w, c, 1, rng)

        self.dec_in = Conv2d(c, 2 * w, 3, rng)
        self.dec_n1 = GroupNorm(g, 2 * w)
        self.dec_up1 = Conv2d(2 * w, 2 * w, 3, rng)
        self.dec_n2 = GroupNorm(g, 2 * w)
        self.dec_up2 = Conv2d(2 * w, w, 3, rng)
        self.dec_n3 = GroupNorm(g, w)
        self.dec_out = Conv2d(w, config.image_channels, 3, rng)

        self.codebook = Tensor(rng.uniform(-1.0, 1.0, (config.codebook_size, c)) / config.codebook_size,
                               requires_grad=True)

    # -- encoder -------------------------------------------------------------
    def _check_image(self, x: Tensor) -> None:
        cfg = self.config
        want = (cfg.image_channels, cfg.image_size, cfg.image_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != want:
            raise ShapeError("vq_encode", x.shape, (None,) + want)

    def encode_continuous(self, x: Tensor) -> Tensor:
        self._check_image(x)
        h = T.silu(self.enc_n1(self.enc_in(x)))
        h = T.silu(self.enc_n2(self.enc_down1(h)))
        h = T.silu(self.enc_n3(self.enc_down2(h)))
        return self.enc_out(h)

    def nearest(self, flat: np.ndarray) -> np.ndarray:
        """Index of the nearest codebook row for each row of ``flat`` [N, C]."""
        cb = self.codebook.data
        d = (flat * flat).sum(1, keepdims=True) - 2.0 * flat @ cb.T + (cb * cb).sum(1)[None, :]
        return d.argmin(axis=1)

    def quantize(self, z_e: Tensor) -> Encoding:
        B, C, h, w = z_e.shape
        flat = T.reshape(T.transpose(z_e, (0, 2, 3, 1)), (B * h * w, C))
        idx = self.nearest(flat.data)
        z_q_flat = T.gather_rows(self.codebook, idx)
        codebook_loss = T.mse(z_q_flat, T.detach(flat))
        commitment_loss = T.mse(flat, T.detach(z_q_flat))
        z_q = T.transpose(T.reshape(T.detach(z_q_flat), (B, h, w, C)), (0, 3, 1, 2))
        # straight-through: forward value is z_q, gradient flows to z_e unchanged
        z_st = T.add(z_e, Tensor(z_q.data - z_e.data))
        return Encoding(z_st, idx.reshape(B, h, w), codebook_loss, commitment_loss, z_e)

    def encode(self, x: Tensor) -> Encoding:
        return self.quantize(self.encode_continuous(x))

    # -- decoder -------------------------------------------------------------
    def decode(self, z: Tensor) -> Tensor:
        if z.ndim != 4 or tuple(z.shape[1:]) != self.config.latent_shape:
            raise ShapeError("vq_decode", z.shape, (None,) + self.config.latent_shape)
        h = T.silu(self.dec_n1(self.dec_in(z)))
        h = T.nearest_upsample2d(h, 2)
        h = T.silu(self.dec_n2(self.dec_up1(h)))
        h = T.nearest_upsample2d(h, 2)
        h = T.silu(self.dec_n3(self.dec_up2(h)))
        return T.tanh(self.dec_out(h))


def vq_encode(model: VQModel, x: np.ndarray):
    """Inference-time encode: returns (quantized latent, indices, (codebook, commitment) losses)."""
    enc = model.encode(Tensor(x))
    return enc.latent.data, enc.indices, (enc.codebook_loss.item(), enc.commitment_loss.item())


def vq_decode(model: VQModel, latent: np.ndarray) -> np.ndarray:
    return model.decode(Tensor(latent)).data


@dataclass
class VQTrainState:
    step: int = 0
    last_used: np.ndarray = field(default=None)
    data_init: bool = True  # seed the codebook from the first batch's encoder outputs


class NonFiniteLoss(FloatingPointError):
    pass


def _seed_codebook(model: VQModel, z_e: np.ndarray, rng: np.random.Generator) -> None:
    flat = z_e.transpose(0, 2, 3, 1).reshape(-1, model.config.latent_channels)
    K = model.config.codebook_size
    pick = rng.choice(flat.shape[0], K, replace=flat.shape[0] < K)
    jitter = 1e-3 * flat.std() * rng.standard_normal((K, flat.shape[1]))
    model.codebook.data[:] = flat[pick] + jitter


def vq_train_step(model: VQModel, batch: np.ndarray, opt: AdamW, state: VQTrainState,
                  rng: np.random.Generator) -> dict:
    """One optimisation step; total = recon MSE + codebook + beta * commitment."""
    cfg = model.config
    if state.last_used is None:
        state.last_used = np.zeros(cfg.codebook_size, dtype=np.int64)
    x = Tensor(batch)
    opt.zero_grad()
    if state.step == 0 and state.data_init:
        _seed_codebook(model, model.encode_continuous(x).data, rng)
    enc = model.encode(x)
    recon = model.decode(enc.latent)
    rec_loss = T.mse(recon, x)
    total = rec_loss + enc.codebook_loss + cfg.commitment_beta * enc.commitment_loss
    if not np.isfinite(total.data):
        raise NonFiniteLoss(f"VQ loss non-finite at step {state.step}: rec={rec_loss.item()}, "
                            f"codebook={enc.codebook_loss.item()}, commit={enc.commitment_loss.item()}")
    total.backward()
    opt.step()
    state.step += 1

    used = np.unique(enc.indices)
    state.last_used[used] = state.step
    dead = np.flatnonzero(state.step - state.last_used >= cfg.dead_code_steps)
    if dead.size:
        flat = enc.pre_quant.data.transpose(0, 2, 3, 1).reshape(-1, cfg.latent_channels)
        model.codebook.data[dead] = flat[rng.integers(flat.shape[0], size=dead.size)]
        state.last_used[dead] = state.step
        opt.reset_rows("codebook", dead)
        log.debug("re-seeded %d dead codebook rows at step %d", dead.size, state.step)
    return {
        "loss": total.item(),
        "recon": rec_loss.item(),
        "codebook": enc.codebook_loss.item(),
        "commitment": enc.commitment_loss.item(),
        "reseeded": int(dead.size),
    }


def train_vq(model: VQModel, images: np.ndarray, steps: int, rng: np.random.Generator,
             batch_size: int = 8, lr: float = 2e-3, lr_final: float | None = None,
             log_every: int = 250) -> list:
    """Train in place; the learning rate decays linearly to ``lr_final`` (default lr / 10)."""
    if len(images) == 0:
        raise ValueError("dataset is empty")
    lr_final = lr / 10 if lr_final is None else lr_final
    opt = AdamW(model, lr=lr)
    state = VQTrainState()
    order = batches(len(images), batch_size, rng)
    history = []
    for step in range(steps):
        opt.lr = lr + (lr_final - lr) * step / max(1, steps - 1)
        out = vq_train_step(model, images[next(order)], opt, state, rng)
        history.append(out)
        if log_every and step % log_every == 0:
            log.info("train-vq step %d loss %.5f recon %.5f", step, out["loss"], out["recon"])
    return history

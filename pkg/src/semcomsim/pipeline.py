"""End-to-end semantic link: encoder -> channel -> conditional diffusion -> VQ decoder."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .channel import INF_SNR, ChannelConfig, PowerConvention, sample_snr_db, sigma_squared, transmit
from .data import batches
from .diffusion import Denoiser, NoiseSchedule, sample, training_loss
from .optim import AdamW
from .semantic import SemanticEncoder, extract
from .tensor import Tensor
from .vq import VQModel, vq_decode, vq_encode

log = logging.getLogger(__name__)


@dataclass
class Pipeline:
    vq: VQModel
    encoder: SemanticEncoder
    denoiser: Denoiser
    schedule: NoiseSchedule
    latent_scale: float = 1.0   # diffusion runs on vq latents times this
    clip: Optional[float] = None  # x0 clip in scaled units
    sample_steps: int = 20
    power_convention: PowerConvention = PowerConvention.FIXED_UNIT

    @property
    def latent_shape(self) -> tuple:
        return self.vq.config.latent_shape

    def target_latents(self, x: np.ndarray, batch: int = 64) -> np.ndarray:
        out = [vq_encode(self.vq, x[i:i + batch])[0] for i in range(0, len(x), batch)]
        return np.concatenate(out) * self.latent_scale

    def decode_latents(self, latents: np.ndarray) -> np.ndarray:
        return vq_decode(self.vq, latents / self.latent_scale)

    def calibrate(self, x: np.ndarray) -> np.ndarray:
        """Set latent_scale (unit std) and clip from training images; returns scaled latents."""
        self.latent_scale = 1.0
        raw = self.target_latents(x)
        self.latent_scale = float(1.0 / raw.std())
        scaled = raw * self.latent_scale
        self.clip = float(np.abs(scaled).max())
        return scaled


def reconstruct(pipeline: Pipeline, x: np.ndarray, snr_db: float, rng,
                z_override: Optional[np.ndarray] = None) -> np.ndarray:
    """Transmit a batch of images and return receiver reconstructions (order-preserving).

    ``rng`` is one generator for the whole batch or a sequence with one per
    image. Each generator is split into a channel stream and a sampler stream,
    so reusing the same generators at another SNR gives common random numbers.
    ``z_override`` replaces the embeddings (used by the unconditioned control).
    Every image is its own transmission: with the empirical power convention
    its power is measured on its own embedding.
    """
    x = np.asarray(x, dtype=np.float64)
    B = x.shape[0]
    z = extract(pipeline.encoder, x) if z_override is None else np.asarray(z_override, dtype=np.float64)
    steps, shape = pipeline.sample_steps, pipeline.latent_shape
    if isinstance(rng, np.random.Generator):
        chan, samp = rng.spawn(2)
        chans = [chan] * B
        noise = samp.standard_normal((steps + 1, B) + shape)
    else:
        if len(rng) != B:
            raise ValueError(f"got {len(rng)} generators for {B} images")
        pairs = [r.spawn(2) for r in rng]
        chans = [c for c, _ in pairs]
        noise = np.stack([s.standard_normal((steps + 1,) + shape) for _, s in pairs], axis=1)
    config = ChannelConfig(snr_db, pipeline.power_convention)
    z_hat = np.stack([transmit(z[i], config, chans[i]) for i in range(B)])
    lat = sample(pipeline.denoiser, pipeline.schedule, z_hat, shape, steps, None,
                 clip=pipeline.clip, noise=noise)
    return pipeline.decode_latents(lat)


def noisy_condition(z: np.ndarray, snr_db: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-sample AWGN on unit-power embeddings; an infinite SNR leaves a sample clean."""
    s2 = np.array([sigma_squared(float(s)) for s in np.atleast_1d(snr_db)])
    noise = rng.standard_normal(z.shape)
    return z + np.sqrt(s2).reshape((-1,) + (1,) * (z.ndim - 1)) * noise


@dataclass
class FinetuneResult:
    losses: list
    snrs: list


def finetune(pipeline: Pipeline, images: np.ndarray, steps: int, snr_range_db: tuple,
             rng: np.random.Generator, batch_size: int = 16, lr: float = 1e-3,
             lr_final: Optional[float] = None, checkpoint_every: int = 0,
             on_checkpoint: Optional[Callable[[int], None]] = None,
             log_every: int = 250) -> FinetuneResult:
    """Train the denoiser on frozen VQ latents and channel-corrupted embeddings.

    ``snr_range_db = (inf, inf)`` trains on clean embeddings. The learning rate
    decays linearly to ``lr_final`` (default: constant).
    """
    if len(images) == 0:
        raise ValueError("dataset is empty")
    lo, hi = snr_range_db
    if lo > hi:
        raise ValueError(f"empty SNR range {snr_range_db}")
    if pipeline.clip is None:
        targets = pipeline.calibrate(images)
    else:
        targets = pipeline.target_latents(images)
    cond = extract(pipeline.encoder, images)
    opt = AdamW(pipeline.denoiser, lr=lr)
    order = batches(len(images), batch_size, rng)
    losses, snrs = [], []
    for step in range(steps):
        if lr_final is not None:
            opt.lr = lr + (lr_final - lr) * step / max(1, steps - 1)
        idx = next(order)
        if lo == INF_SNR:
            snr = np.full(len(idx), INF_SNR)
        else:
            snr = sample_snr_db(rng, lo, hi, size=len(idx))
        z_hat = noisy_condition(cond[idx], snr, rng)
        loss = training_loss(pipeline.denoiser, pipeline.schedule, targets[idx], z_hat, rng)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
        snrs.append(snr)
        if log_every and step % log_every == 0:
            log.info("finetune-diffusion step %d loss %.5f", step, losses[-1])
        if checkpoint_every and on_checkpoint and (step + 1) % checkpoint_every == 0:
            on_checkpoint(step + 1)
    return FinetuneResult(losses, snrs)

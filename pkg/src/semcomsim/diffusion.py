"""Conditional latent diffusion: noise schedule, FiLM-conditioned denoiser, sampler.

The denoiser predicts the noise added to a (scaled) VQ latent, conditioned
on the received embedding Z_hat through per-channel FiLM after every group norm.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Conv2d, GroupNorm, Linear, Module
from .tensor import ShapeError, Tensor

log = logging.getLogger(__name__)


class NoiseSchedule:
    """Cosine schedule: alpha_bar[0] = 1, strictly decreasing to alpha_bar[T] > 0."""

    def __init__(self, alpha_bar: np.ndarray):
        ab = np.asarray(alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 2 or ab[0] != 1.0:
            raise ValueError("alpha_bar must be 1-D with alpha_bar[0] == 1")
        if not (np.all(ab > 0) and np.all(np.diff(ab) < 0)):
            raise ValueError("alpha_bar must be positive and strictly decreasing")
        self.alpha_bar = ab
        self.alpha_bar.setflags(write=False)

    @classmethod
    def cosine(cls, T: int = 1000, s: float = 0.008, max_beta: float = 0.999) -> "NoiseSchedule":
        f = np.cos((np.arange(T + 1) / T + s) / (1 + s) * np.pi / 2) ** 2
        betas = np.clip(1.0 - f[1:] / f[:-1], 0.0, max_beta)
        return cls(np.concatenate([[1.0], np.cumprod(1.0 - betas)]))

    @property
    def T(self) -> int:
        return self.alpha_bar.size - 1

    def __getitem__(self, t):
        return self.alpha_bar[t]

    def strided(self, steps: int) -> np.ndarray:
        """Descending timesteps T = tau_0 > ... > tau_steps = 0, evenly spaced."""
        if not 1 <= steps <= self.T:
            raise ValueError(f"steps must be in [1, {self.T}], got {steps}")
        return np.round(np.linspace(self.T, 0, steps + 1)).astype(np.int64)


def forward_noise(schedule: NoiseSchedule, x0, t, eps):
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps; ``t`` scalar or per-sample [B]."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError("forward_noise", x0.shape, eps.shape)
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > schedule.T):
        raise ValueError(f"t must be in [1, {schedule.T}], got {t}")
    ab = schedule[t]
    if ab.ndim:
        ab = ab.reshape((-1,) + (1,) * (x0.ndim - 1))
    return noise_mix(ab, x0, eps)


def noise_mix(alpha_bar, x0, eps):
    """sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps for any alpha_bar in [0, 1]."""
    return np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * eps


def timestep_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal features [B, dim] of (possibly fractional) timesteps."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


@dataclass(frozen=True)
class DenoiserConfig:
    latent_channels: int = 8
    latent_size: int = 8
    cond_size: int = 64
    width: int = 64
    emb_dim: int = 128
    groups: int = 8


class _FiLMBlock(Module):
    """GN -> FiLM -> SiLU -> conv, twice, with a residual connection."""

    def __init__(self, cin: int, cout: int, emb_dim: int, groups: int, rng):
        self.n1 = GroupNorm(groups, cin)
        self.f1 = Linear(emb_dim, 2 * cin, rng, zero_init=True)
        self.c1 = Conv2d(cin, cout, 3, rng)
        self.n2 = GroupNorm(groups, cout)
        self.f2 = Linear(emb_dim, 2 * cout, rng, zero_init=True)
        self.c2 = Conv2d(cout, cout, 3, rng, zero_init=True)
        self.skip = Conv2d(cin, cout, 1, rng) if cin != cout else None

    @staticmethod
    def _film(h: Tensor, film: Linear, e: Tensor) -> Tensor:
        C = h.shape[1]
        p = film(e)
        B = p.shape[0]
        scale = T.reshape(p, (B, 2, C))
        return T.channel_affine(h, _take(scale, 0) + 1.0, _take(scale, 1))

    def __call__(self, x: Tensor, e: Tensor) -> Tensor:
        h = self.c1(T.silu(self._film(self.n1(x), self.f1, e)))
        h = self.c2(T.silu(self._film(self.n2(h), self.f2, e)))
        return T.add(self.skip(x) if self.skip is not None else x, h)


def _take(x: Tensor, i: int) -> Tensor:
    """x[:, i, :] for a [B, 2, C] tensor."""
    B, _, C = x.shape
    flat = T.reshape(x, (B * 2, C))
    return T.gather_rows(flat, np.arange(B) * 2 + i)


class Denoiser(Module):
    """Small two-level UNet on the latent grid predicting the added noise."""

    def __init__(self, config: DenoiserConfig, rng: np.random.Generator):
        c, w, d, g = config.latent_channels, config.width, config.emb_dim, config.groups
        self.config = config
        self.t1 = Linear(d, d, rng)
        self.t2 = Linear(d, d, rng)
        self.z1 = Linear(config.cond_size, d, rng)
        self.z2 = Linear(d, d, rng)
        self.inp = Conv2d(c, w, 3, rng)
        self.down_block = _FiLMBlock(w, w, d, g, rng)
        self.down = Conv2d(w, 2 * w, 3, rng, stride=2, padding=1)
        self.mid = _FiLMBlock(2 * w, 2 * w, d, g, rng)
        self.up_block = _FiLMBlock(3 * w, w, d, g, rng)
        self.out_norm = GroupNorm(g, w)
        self.out = Conv2d(w, c, 3, rng, zero_init=True)

    def embed(self, t, z_hat: np.ndarray) -> Tensor:
        d = self.config.emb_dim
        te = T.silu(self.t1(Tensor(timestep_embedding(t, d))))
        B = z_hat.shape[0]
        ze = T.silu(self.z1(Tensor(z_hat.reshape(B, -1))))
        return T.silu(T.add(self.t2(te), self.z2(ze)))

    def __call__(self, x: Tensor, t, z_hat: np.ndarray) -> Tensor:
        cfg = self.config
        want = (cfg.latent_channels, cfg.latent_size, cfg.latent_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != want:
            raise ShapeError("denoiser", x.shape, (None,) + want)
        z_hat = np.asarray(z_hat, dtype=np.float64)
        if z_hat.shape[0] != x.shape[0] or z_hat[0].size != cfg.cond_size:
            raise ShapeError("denoiser", x.shape, z_hat.shape, detail="conditioning batch/size mismatch")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        e = self.embed(t, z_hat)
        h0 = self.down_block(self.inp(x), e)
        h1 = self.mid(self.down(h0), e)
        h = T.concat([T.nearest_upsample2d(h1, 2), h0], axis=1)
        h = self.up_block(h, e)
        return self.out(T.silu(self.out_norm(h)))


def training_loss(denoiser, schedule: NoiseSchedule, x0: np.ndarray, z_hat: np.ndarray,
                  rng: np.random.Generator, t=None, eps=None) -> Tensor:
    """MSE between the drawn noise and the denoiser's prediction at a uniform random t."""
    B = x0.shape[0]
    if t is None:
        t = rng.integers(1, schedule.T + 1, size=B)
    if eps is None:
        eps = rng.standard_normal(x0.shape)
    xt = forward_noise(schedule, x0, t, eps)
    pred = denoiser(Tensor(xt), t, z_hat)
    loss = T.mse(pred, eps)
    if not np.isfinite(loss.data):
        raise FloatingPointError(f"non-finite diffusion loss at t={np.asarray(t).tolist()}")
    return loss


def sample(denoiser, schedule: NoiseSchedule, z_hat: np.ndarray, shape: tuple, steps: int,
           rng: np.random.Generator, clip: float | None = None, noise: np.ndarray | None = None) -> np.ndarray:
    """Strided DDPM ancestral sampling from pure noise, conditioned on ``z_hat``.

    ``shape`` is the per-sample latent shape. ``noise`` optionally supplies all
    Gaussian draws up front as [steps + 1, B, *shape] (common random numbers).
    """
    B = z_hat.shape[0]
    taus = schedule.strided(steps)
    if noise is None:
        noise = rng.standard_normal((steps + 1, B) + tuple(shape))
    elif noise.shape != (steps + 1, B) + tuple(shape):
        raise ShapeError("sample", noise.shape, (steps + 1, B) + tuple(shape))
    x = noise[0].copy()
    for i, (t, s) in enumerate(zip(taus[:-1], taus[1:])):
        ab_t, ab_s = schedule[t], schedule[s]
        eps = denoiser(Tensor(x), t, z_hat).data
        x0 = (x - math.sqrt(1.0 - ab_t) * eps) / math.sqrt(ab_t)
        if clip is not None:
            x0 = np.clip(x0, -clip, clip)
        beta = 1.0 - ab_t / ab_s
        mean = (math.sqrt(ab_s) * beta * x0 + math.sqrt(ab_t / ab_s) * (1.0 - ab_s) * x) / (1.0 - ab_t)
        if s > 0:
            var = (1.0 - ab_s) / (1.0 - ab_t) * beta
            x = mean + math.sqrt(var) * noise[i + 1]
        else:
            x = mean
    return x

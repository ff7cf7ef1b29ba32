"""Image quality and efficiency metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_IDENTICAL = math.inf
SSIM_WINDOW = 8
K1, K2 = 0.01, 0.03


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: float
    mse: float
    failed: bool = False

    def __post_init__(self):
        if self.failed and (self.psnr_db != 0.0 or self.ssim != 0.0):
            raise ValueError("a failed transmission must score PSNR=0 and SSIM=0")

    @classmethod
    def failure(cls, mse: float = math.nan) -> "MetricReport":
        return cls(psnr_db=0.0, ssim=0.0, mse=mse, failed=True)


def to_pixels(x: np.ndarray) -> np.ndarray:
    """Map normalized [-1, 1] images to the [0, 255] scale used for scoring."""
    return (np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0) + 1.0) * 127.5


def mse(x: np.ndarray, y: np.ndarray) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    d = x - y
    return float(np.mean(d * d))


def psnr(x: np.ndarray, y: np.ndarray, peak: float = 255.0) -> float:
    if not peak > 0:
        raise ValueError("peak must be positive")
    err = mse(x, y)
    if err == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(peak * peak / err)


def _ssim_2d(x: np.ndarray, y: np.ndarray, peak: float, win: int) -> float:
    c1 = (K1 * peak) ** 2
    c2 = (K2 * peak) ** 2
    wx = sliding_window_view(x, (win, win))
    wy = sliding_window_view(y, (win, win))
    mx = wx.mean(axis=(-2, -1))
    my = wy.mean(axis=(-2, -1))
    sxx = (wx * wx).mean(axis=(-2, -1)) - mx * mx
    syy = (wy * wy).mean(axis=(-2, -1)) - my * my
    sxy = (wx * wy).mean(axis=(-2, -1)) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(x: np.ndarray, y: np.ndarray, peak: float = 255.0, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all ``window`` x ``window`` uniform sliding windows.

    Accepts [H, W] or channel-first [C, H, W]; multi-channel input is scored
    per channel and averaged.
    """
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.ndim != 3:
        raise ValueError(f"ssim expects [H,W] or [C,H,W], got {x.shape}")
    if x.shape[1] < window or x.shape[2] < window:
        raise ValueError(f"image {x.shape[1:]} smaller than the {window}x{window} window")
    return float(np.mean([_ssim_2d(a, b, peak, window) for a, b in zip(x, y)]))


def evaluate_pair(x: np.ndarray, x_hat, peak: float = 255.0) -> MetricReport:
    """Score a reconstruction; ``x_hat=None`` marks a failed transmission."""
    if x_hat is None:
        return MetricReport.failure()
    return MetricReport(psnr_db=psnr(x, x_hat, peak), ssim=ssim(x, x_hat, peak), mse=mse(x, x_hat))


def compression_ratio(image_shape: Sequence[int], embedding_shape: Sequence[int]) -> float:
    """Input dimensionality over transmitted dimensionality."""
    for s in list(image_shape) + list(embedding_shape):
        if int(s) <= 0:
            raise ValueError(f"extents must be positive: {image_shape}, {embedding_shape}")
    return float(math.prod(int(s) for s in image_shape)) / math.prod(int(s) for s in embedding_shape)


def percent_of_original(image_shape, embedding_shape) -> float:
    return 100.0 / compression_ratio(image_shape, embedding_shape)


def _abs_diff(a, b) -> float:
    return float(np.mean(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


DISTANCES: dict = {"mse": mse, "abs": _abs_diff}


def predictability(outputs: Sequence[np.ndarray], distance: Union[str, Callable] = "mse") -> tuple:
    """Mean and population std of ``distance`` over all unordered output pairs."""
    if len(outputs) < 2:
        raise ValueError("predictability needs at least two outputs")
    shape = np.shape(outputs[0])
    if any(np.shape(o) != shape for o in outputs):
        raise ValueError("predictability: outputs differ in shape")
    dist = DISTANCES[distance] if isinstance(distance, str) else distance
    d = np.array([dist(a, b) for a, b in itertools.combinations(outputs, 2)])
    return float(d.mean()), float(d.std())

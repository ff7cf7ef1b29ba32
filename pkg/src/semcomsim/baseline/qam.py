"""Gray-mapped square QAM with unit average symbol energy and max-log LLRs.

Bit layout per symbol: the first half of the bits selects the in-phase
level, the second half the quadrature level. Per axis, the leading bit is
the sign (0 -> positive) and the remaining bits walk outward in Gray order,
so for 4-QAM the bits ``00`` map to ``(1 + 1j) / sqrt(2)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

SUPPORTED_ORDERS = (4, 16)


def _axis_levels(bits_per_axis: int) -> np.ndarray:
    """Amplitude for each axis bit pattern (index = pattern as an integer)."""
    n = 1 << bits_per_axis
    levels = np.zeros(n)
    half = n // 2
    for pattern in range(n):
        sign_bit = pattern >> (bits_per_axis - 1)
        rest = pattern & (half - 1)
        # Gray decode of the magnitude bits gives the ring index 0..half-1
        ring, g = 0, rest
        while g:
            ring ^= g
            g >>= 1
        amp = 2 * ring + 1
        levels[pattern] = -amp if sign_bit else amp
    return levels


@lru_cache(maxsize=None)
def constellation(order: int):
    """Returns (points [order], bit labels [order, log2(order)])."""
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported QAM order {order}; expected one of {SUPPORTED_ORDERS}")
    bps = int(np.log2(order))
    per_axis = bps // 2
    levels = _axis_levels(per_axis)
    labels = ((np.arange(order)[:, None] >> np.arange(bps - 1, -1, -1)) & 1).astype(np.uint8)
    weights = 1 << np.arange(per_axis - 1, -1, -1)
    i_idx = labels[:, :per_axis] @ weights
    q_idx = labels[:, per_axis:] @ weights
    pts = levels[i_idx] + 1j * levels[q_idx]
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    labels.setflags(write=False)
    return pts, labels


def bits_per_symbol(order: int) -> int:
    constellation(order)
    return int(np.log2(order))


def qam_modulate(bits: np.ndarray, order: int = 4) -> np.ndarray:
    pts, _ = constellation(order)
    bps = bits_per_symbol(order)
    bits = np.asarray(bits).astype(np.int64).ravel()
    if bits.size % bps:
        raise ValueError(f"bit count {bits.size} not divisible by {bps}")
    idx = bits.reshape(-1, bps) @ (1 << np.arange(bps - 1, -1, -1))
    return pts[idx]


def qam_demodulate_llr(symbols: np.ndarray, sigma2: float, order: int = 4) -> np.ndarray:
    """Max-log LLR per bit (positive favours 0) for complex noise of total variance ``sigma2``."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    pts, labels = constellation(order)
    y = np.asarray(symbols).ravel()
    d = np.abs(y[:, None] - pts[None, :]) ** 2  # [N, order]
    bps = labels.shape[1]
    out = np.empty((y.size, bps))
    for b in range(bps):
        ones = labels[:, b].astype(bool)
        out[:, b] = (d[:, ones].min(axis=1) - d[:, ~ones].min(axis=1)) / sigma2
    return out.ravel()

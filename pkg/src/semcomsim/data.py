"""Image datasets: synthetic families and directory ingestion.

All images are channel-first float arrays normalized to [-1, 1].
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .rng import stream

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".ppm", ".pnm", ".jpg", ".jpeg", ".bmp"}

# "shapes": muted street-scene colours; "textures": saturated colours absent from "shapes"
PALETTES = {
    "shapes": np.array([
        [70, 70, 70], [128, 64, 128], [107, 142, 35], [70, 130, 180],
        [220, 20, 60], [190, 153, 153], [250, 170, 30], [152, 251, 152],
    ], dtype=np.float64),
    "textures": np.array([
        [255, 0, 255], [0, 255, 255], [255, 255, 0], [40, 0, 90],
        [255, 128, 0], [0, 60, 30],
    ], dtype=np.float64),
}
FAMILIES = tuple(PALETTES)


class DatasetError(ValueError):
    pass


def normalize(pixels: np.ndarray) -> np.ndarray:
    """uint8-range [C, H, W] pixels -> [-1, 1]; 0 maps to -1 and 255 to +1."""
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


def denormalize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.round((np.asarray(x) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def _shapes_image(rng: np.random.Generator, size: int) -> np.ndarray:
    pal = PALETTES["shapes"]
    yy, xx = (np.indices((size, size)) + 0.5) / size
    c0, c1 = pal[rng.choice(len(pal), 2, replace=False)]
    if rng.random() < 0.5:
        theta = rng.uniform(0, 2 * np.pi)
        t = np.clip(0.5 + (np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5)), 0, 1)
        img = c0[:, None, None] * (1 - t) + c1[:, None, None] * t
    else:
        img = np.broadcast_to(c0[:, None, None], (3, size, size)).copy()
    for _ in range(rng.integers(1, 4)):
        color = pal[rng.integers(len(pal))]
        if rng.random() < 0.5:
            x0, y0 = rng.uniform(0, 0.7, 2)
            w, h = rng.uniform(0.2, 0.6, 2)
            mask = (xx >= x0) & (xx < x0 + w) & (yy >= y0) & (yy < y0 + h)
        else:
            cx, cy = rng.uniform(0.2, 0.8, 2)
            r = rng.uniform(0.12, 0.35)
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        img[:, mask] = color[:, None]
    return img


def _textures_image(rng: np.random.Generator, size: int) -> np.ndarray:
    pal = PALETTES["textures"]
    yy, xx = (np.indices((size, size)) + 0.5) / size
    c0, c1 = pal[rng.choice(len(pal), 2, replace=False)]
    kind = rng.integers(3)
    if kind == 0:  # grating
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(2, 6)
        t = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + rng.uniform(0, 6))
    elif kind == 1:  # checkerboard
        n = rng.integers(2, 6)
        t = ((np.floor(xx * n) + np.floor(yy * n)) % 2).astype(np.float64)
    else:  # concentric rings
        cx, cy = rng.uniform(0.2, 0.8, 2)
        t = 0.5 + 0.5 * np.cos(2 * np.pi * rng.uniform(3, 7) * np.hypot(xx - cx, yy - cy))
    return c0[:, None, None] * (1 - t) + c1[:, None, None] * t


_GENERATORS = {"shapes": _shapes_image, "textures": _textures_image}


def synthetic_images(family: str, count: int, size: int = 32, seed: int = 0, split: str = "train") -> np.ndarray:
    """Deterministic synthetic dataset [count, 3, size, size] in [-1, 1]."""
    if family not in _GENERATORS:
        raise DatasetError(f"unknown synthetic family {family!r}; choose from {sorted(_GENERATORS)}")
    if count <= 0:
        raise DatasetError("dataset is empty")
    rng = stream(seed, f"data/{family}/{split}")
    gen = _GENERATORS[family]
    return np.stack([normalize(np.round(gen(rng, size))) for _ in range(count)])


def load_image(path, size: int | None = None) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.uint8)
    return normalize(arr.transpose(2, 0, 1))


def load_images(directory, size: int) -> np.ndarray:
    """Load every readable image under ``directory`` (sorted by name), resized to ``size``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"not a directory: {directory}")
    out = []
    for path in sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
        try:
            out.append(load_image(path, size))
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
    if not out:
        raise DatasetError(f"no readable images in {directory}")
    return np.stack(out)


def save_image(path, x: np.ndarray) -> None:
    """Write a normalized [3, H, W] image; format from suffix (.ppm writes binary P6)."""
    Image.fromarray(denormalize(x).transpose(1, 2, 0), mode="RGB").save(path)


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless stream of index batches, reshuffled every epoch."""
    while True:
        perm = rng.permutation(n)
        for i in range(0, n - batch_size + 1, batch_size):
            yield perm[i:i + batch_size]
        if n < batch_size:
            yield rng.choice(n, batch_size, replace=True)

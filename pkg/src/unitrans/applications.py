"""Workflows on saved latents: interpolation, style mixing, degraded inputs, contact sheets."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import torch
from PIL import Image

from .adapters.base import mix_styles
from .errors import ConfigError, DimensionError
from .objectives import Mask

DEFAULT_SPLIT = 4


def interpolate(w_a: torch.Tensor, w_b: torch.Tensor, steps: int, generator) -> list[torch.Tensor]:
    """Render ``steps`` images along the straight line from ``w_a`` to ``w_b`` in W.

    Uses ``(1 - t) w_a + t w_b`` so both endpoints reproduce the input codes exactly.
    """
    if w_a.shape != w_b.shape:
        raise DimensionError(f"cannot interpolate codes of shape {tuple(w_a.shape)} and {tuple(w_b.shape)}")
    if steps < 2:
        raise ConfigError("interpolation needs at least 2 steps")
    images = []
    for t in np.linspace(0.0, 1.0, steps):
        w = (1.0 - float(t)) * w_a + float(t) * w_b
        images.append(generator.generate(w))
    return images


def mix(coarse: torch.Tensor, fine: torch.Tensor, generator, split_layer: int = DEFAULT_SPLIT) -> torch.Tensor:
    """Layers ``[0, split)`` take ``coarse``, the rest take ``fine``."""
    if not 0 <= split_layer <= generator.n_layers:
        raise ConfigError(f"split layer {split_layer} outside 0..{generator.n_layers}")
    head = list(range(split_layer))
    tail = list(range(split_layer, generator.n_layers))
    return mix_styles(generator, [coarse, fine], [head, tail])


def random_rect_mask(height: int, width: int, seed: int,
                     area: tuple[float, float] = (0.2, 0.5)) -> Mask:
    """Axis-aligned rectangular hole covering a seeded fraction of the image.

    Returns a mask whose zeros mark the hole.
    """
    lo, hi = area
    if not 0 < lo <= hi < 1:
        raise ConfigError("mask area bounds must satisfy 0 < lo <= hi < 1")
    rng = np.random.default_rng(seed)
    n = height * width
    while True:
        frac = rng.uniform(lo, hi)
        aspect = np.exp(rng.uniform(np.log(0.5), np.log(2.0)))
        h = int(round(np.sqrt(frac * n * aspect)))
        w = int(round(frac * n / max(h, 1)))
        if 0 < h <= height and 0 < w <= width and lo <= h * w / n <= hi:
            break
    top = int(rng.integers(0, height - h + 1))
    left = int(rng.integers(0, width - w + 1))
    m = torch.ones(height, width, dtype=torch.float64)
    m[top: top + h, left: left + w] = 0
    return Mask(m)


def translate_degraded(I_src: torch.Tensor, mode: Literal["low_res", "masked"], translator,
                       mask: Mask | None = None):
    """Translate a low-resolution or partially masked source.

    ``low_res`` compares the output at the source resolution; ``masked``
    restricts the pixel losses and the source embedding to observed pixels.
    """
    if mode == "low_res":
        if I_src.shape[-1] > translator.generator.resolution:
            raise ConfigError("low_res input is larger than the generator output")
        return translator.translate(I_src)
    if mode == "masked":
        if mask is None:
            raise ConfigError("masked mode needs a mask")
        return translator.translate(I_src, mask)
    raise ConfigError(f"unknown degradation mode {mode!r}")


def to_uint8(img: torch.Tensor) -> np.ndarray:
    """C x H x W in [0, 1] to H x W x C bytes."""
    a = img.detach().to(torch.float64).clamp(0, 1).cpu().numpy()
    return np.round(a.transpose(1, 2, 0) * 255).astype(np.uint8)


def from_uint8(a: np.ndarray) -> torch.Tensor:
    a = np.asarray(a)
    if a.ndim == 2:
        a = np.repeat(a[..., None], 3, axis=-1)
    return torch.as_tensor(a[..., :3].transpose(2, 0, 1) / 255.0, dtype=torch.float64)


def save_png(img: torch.Tensor, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path)
    return path


def load_png(path) -> torch.Tensor:
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def contact_sheet(rows: Sequence[Sequence[torch.Tensor]], path, pad: int = 2) -> Path:
    """Write an n x m grid of equally sized images as one PNG."""
    if not rows or not rows[0]:
        raise ConfigError("contact sheet needs at least one image")
    c, h, w = rows[0][0].shape
    n, m = len(rows), max(len(r) for r in rows)
    sheet = np.full((n * h + (n + 1) * pad, m * w + (m + 1) * pad, 3), 255, np.uint8)
    for i, row in enumerate(rows):
        for j, img in enumerate(row):
            if tuple(img.shape) != (c, h, w):
                raise DimensionError("all contact-sheet images must share one shape")
            y, x = pad + i * (h + pad), pad + j * (w + pad)
            sheet[y: y + h, x: x + w] = to_uint8(img)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(sheet).save(path)
    return path

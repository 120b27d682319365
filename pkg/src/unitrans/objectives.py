"""Image-side objectives: colour (MSE), perceptual, cycle, and the weighted total.

Pixel losses compare the generated image against the source at the source's
resolution (see :func:`resize_policy`), and all of them accept an optional
binary mask (1 = observed pixel, 0 = masked out) so degraded inputs only
constrain their visible region.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .decoupling import DecouplingLosses, Reduction
from .errors import ConfigError, DimensionError
from .latent import p_to_w

LAMBDA_MSE = 10.0


@dataclass
class Mask:
    """Binary H x W mask; ones mark the pixels that losses may read."""

    array: torch.Tensor

    def __post_init__(self):
        a = torch.as_tensor(self.array, dtype=torch.float64)
        if a.dim() != 2:
            raise DimensionError(f"mask must be H x W, got shape {tuple(a.shape)}")
        if not bool(((a == 0) | (a == 1)).all()):
            raise ConfigError("mask entries must be 0 or 1")
        if not bool(a.any()):
            raise ConfigError("mask covers no pixels")
        self.array = a

    @property
    def coverage(self) -> float:
        return float(self.array.mean())

    @classmethod
    def from_image(cls, pixels: np.ndarray, threshold: float = 0.5) -> "Mask":
        """Threshold a single-channel image scaled to [0, 1]."""
        return cls(torch.as_tensor((np.asarray(pixels) >= threshold).astype(np.float64)))


def _mask_tensor(mask) -> torch.Tensor | None:
    if mask is None:
        return None
    return mask.array if isinstance(mask, Mask) else torch.as_tensor(mask)


def generate(q: torch.Tensor, generator) -> torch.Tensor:
    """Render a P-space code: activate it into W and run the generator."""
    if q.shape[-1] != generator.latent_width:
        raise DimensionError(f"q has width {q.shape[-1]}, generator expects {generator.latent_width}")
    return generator.generate(p_to_w(q))


def area_downsample(img: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    h, w = img.shape[-2:]
    th, tw = size
    if (h, w) == (th, tw):
        return img
    if h % th or w % tw or h // th != w // tw:
        raise ConfigError(f"cannot area-downsample {h}x{w} to {th}x{tw} by an integer factor")
    single = img.dim() == 3
    x = img.unsqueeze(0) if single else img
    x = F.avg_pool2d(x, kernel_size=h // th)
    return x[0] if single else x


def resize_policy(out: torch.Tensor, src: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Bring the generated image and the source to a common resolution.

    The higher-resolution image is area-averaged down to the other one.
    """
    so, ss = tuple(out.shape[-2:]), tuple(src.shape[-2:])
    if so == ss:
        return out, src
    if ss[0] <= so[0] and ss[1] <= so[1]:
        return area_downsample(out, ss), src
    return out, area_downsample(src, so)


def _weighted_mean_sq(diff2: torch.Tensor, m: torch.Tensor, reduction: Reduction) -> torch.Tensor:
    weighted = diff2 * m
    if reduction == "sum":
        return weighted.sum()
    count = m.sum() * (diff2.numel() // m.numel())
    return weighted.sum() / count


def loss_mse(I_tar: torch.Tensor, I_src: torch.Tensor, mask=None,
             reduction: Reduction = "mean") -> torch.Tensor:
    """Mean squared pixel difference, restricted to observed pixels when masked."""
    a, b = resize_policy(I_tar, I_src)
    if a.shape[-3:] != b.shape[-3:]:
        raise DimensionError(f"image shapes differ after resize: {tuple(a.shape)} vs {tuple(b.shape)}")
    m = _mask_tensor(mask)
    if m is None:
        m = torch.ones(a.shape[-2:], dtype=a.dtype)
    elif tuple(m.shape) != tuple(a.shape[-2:]):
        raise DimensionError(f"mask is {tuple(m.shape)} but images are {tuple(a.shape[-2:])}")
    return _weighted_mean_sq((a - b) ** 2, m.to(a.dtype), reduction)


def _feature_mask(m: torch.Tensor, size) -> torch.Tensor:
    if tuple(m.shape) == tuple(size):
        return m
    pooled = F.adaptive_avg_pool2d(m[None, None], size)[0, 0]
    # keep a feature position only if its whole footprint is observed
    return (pooled == 1).to(m.dtype)


def _safe_sqrt(x: torch.Tensor) -> torch.Tensor:
    return torch.where(x > 0, x.clamp_min(torch.finfo(x.dtype).tiny).sqrt(), torch.zeros_like(x))


def loss_lpips(I_tar: torch.Tensor, I_src: torch.Tensor, extractor, mask=None) -> torch.Tensor:
    """Euclidean distance between feature stacks, each layer averaged per position."""
    a, b = resize_policy(I_tar, I_src)
    m = _mask_tensor(mask)
    if m is None:
        m = torch.ones(a.shape[-2:], dtype=a.dtype)
    elif tuple(m.shape) != tuple(a.shape[-2:]):
        raise DimensionError(f"mask is {tuple(m.shape)} but images are {tuple(a.shape[-2:])}")
    fa, fb = extractor.features(a), extractor.features(b)
    total = a.new_zeros(())
    for x, y in zip(fa, fb):
        ml = _feature_mask(m.to(x.dtype), x.shape[-2:])
        if bool(ml.any()):
            total = total + _weighted_mean_sq((x - y) ** 2, ml, "mean")
    return _safe_sqrt(total)


def cycle_pass(I_tar: torch.Tensor, image_encoder, mapper, generator,
               reduction: Reduction = "mean"):
    """Re-encode the output, map it back to P space and render again.

    Returns ``(I_cycle, L_cycle, v_tar)``.
    """
    v_tar = image_encoder.encode(I_tar)
    I_cycle = generate(mapper(v_tar), generator)
    return I_cycle, loss_mse(I_tar, I_cycle, reduction=reduction), v_tar


@dataclass
class LossBreakdown:
    mse: torch.Tensor | float
    lpips: torch.Tensor | float
    decoupling: torch.Tensor | float
    cycle: torch.Tensor | float
    p: torch.Tensor | float
    total: torch.Tensor | float
    lambda_mse: float = LAMBDA_MSE
    orthogonal: torch.Tensor | float = 0.0
    specific: torch.Tensor | float = 0.0
    agnostic: torch.Tensor | float = 0.0
    reconstruction: torch.Tensor | float = 0.0
    g: torch.Tensor | float = 0.0

    def as_floats(self) -> dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}

    def check_identity(self, tol: float = 1e-6) -> bool:
        f = self.as_floats()
        expected = f["lambda_mse"] * f["mse"] + f["lpips"] + f["decoupling"] + f["cycle"] + f["p"]
        return abs(f["total"] - expected) <= tol * max(1.0, abs(expected))


def total_loss(mse, lpips, decoupling, cycle, p, lambda_mse: float = LAMBDA_MSE,
               g=0.0) -> LossBreakdown:
    """Weighted sum ``lambda_mse * mse + lpips + decoupling + cycle + p``."""
    parts = {}
    if isinstance(decoupling, DecouplingLosses):
        parts = dict(orthogonal=decoupling.orthogonal, specific=decoupling.specific,
                     agnostic=decoupling.agnostic, reconstruction=decoupling.reconstruction)
        decoupling = decoupling.total
    total = lambda_mse * mse + lpips + decoupling + cycle + p
    return LossBreakdown(mse=mse, lpips=lpips, decoupling=decoupling, cycle=cycle, p=p,
                         total=total, lambda_mse=lambda_mse, g=g, **parts)

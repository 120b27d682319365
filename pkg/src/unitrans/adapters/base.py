"""Handle interfaces for generators, encoders and perceptual extractors.

Everything outside this package talks to these classes only, so the math core
can be exercised with the toy stack and swapped onto pretrained backbones.
Images are float tensors shaped ``(3, H, W)`` or ``(B, 3, H, W)`` in [0, 1].
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from typing import Sequence

import torch
import torch.nn.functional as F

from ..errors import ConfigError, DimensionError


def sha256_bytes(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(c)
    return h.hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def tensor_fingerprint(*tensors: torch.Tensor, tag: str = "") -> str:
    chunks = [tag.encode()]
    chunks += [t.detach().cpu().contiguous().numpy().tobytes() for t in tensors]
    return sha256_bytes(*chunks)[:16]


def _batched(img: torch.Tensor):
    if img.dim() == 3:
        return img.unsqueeze(0), True
    if img.dim() == 4:
        return img, False
    raise DimensionError(f"expected (3,H,W) or (B,3,H,W) image, got shape {tuple(img.shape)}")


def resize_bicubic(img: torch.Tensor, size: int) -> torch.Tensor:
    """Bicubic resample to ``size`` x ``size`` (antialiased when shrinking)."""
    x, single = _batched(img)
    if x.shape[-1] != size or x.shape[-2] != size:
        shrink = x.shape[-1] > size
        x = F.interpolate(x, size=(size, size), mode="bicubic", align_corners=False,
                          antialias=shrink)
    return x[0] if single else x


class Generator(ABC):
    """A style-based generator: native W sampling plus layer-wise synthesis."""

    latent_width: int
    n_layers: int
    resolution: int
    fingerprint: str
    reentrant: bool = True

    @abstractmethod
    def sample_w(self, n: int, seed: int) -> torch.Tensor:
        """Draw ``n`` W codes through the generator's own mapping path."""

    @abstractmethod
    def synthesize(self, ws: torch.Tensor) -> torch.Tensor:
        """Render per-layer codes ``(L, d_w)`` or ``(B, L, d_w)`` to images."""

    def generate(self, w: torch.Tensor) -> torch.Tensor:
        """Render a single W code (or a batch) injected into every layer."""
        if w.shape[-1] != self.latent_width:
            raise DimensionError(f"generator expects width {self.latent_width}, got {w.shape[-1]}")
        ws = w.unsqueeze(-2).expand(*w.shape[:-1], self.n_layers, self.latent_width)
        return self.synthesize(ws)


class ImageEncoder(ABC):
    width: int = 512
    input_resolution: int
    fingerprint: str
    modality = "image"
    channel_mean: Sequence[float] = (0.5, 0.5, 0.5)
    channel_std: Sequence[float] = (0.5, 0.5, 0.5)
    reentrant: bool = True

    def preprocess(self, img: torch.Tensor) -> torch.Tensor:
        x, _ = _batched(img)
        x = resize_bicubic(x, self.input_resolution)
        mean = torch.as_tensor(self.channel_mean, dtype=x.dtype).view(1, 3, 1, 1)
        std = torch.as_tensor(self.channel_std, dtype=x.dtype).view(1, 3, 1, 1)
        return (x - mean) / std

    @abstractmethod
    def _embed(self, x: torch.Tensor) -> torch.Tensor:
        """Embed a preprocessed ``(B, 3, r, r)`` batch to ``(B, width)``."""

    def encode(self, img: torch.Tensor) -> torch.Tensor:
        _, single = _batched(img)
        out = self._embed(self.preprocess(img))
        return out[0] if single else out


class TextEncoder(ABC):
    width: int = 512
    fingerprint: str
    modality = "text"
    reentrant: bool = True

    @abstractmethod
    def encode_text(self, text: str) -> torch.Tensor:
        ...


class PerceptualExtractor(ABC):
    fingerprint: str
    description: str = ""
    reentrant: bool = True

    @abstractmethod
    def features(self, img: torch.Tensor) -> list[torch.Tensor]:
        """Feature maps ``(B, C, h, w)`` of a ``(B, 3, H, W)`` batch."""


def mix_styles(generator: Generator, w_list: Sequence[torch.Tensor],
               layer_assignment: Sequence[Sequence[int]]) -> torch.Tensor:
    """Inject ``w_list[i]`` into the layers ``layer_assignment[i]`` and render.

    The assignment has to cover every synthesis layer exactly once.
    """
    if len(w_list) != len(layer_assignment):
        raise ConfigError("one layer list per code is required")
    owner = [-1] * generator.n_layers
    for i, layers in enumerate(layer_assignment):
        for layer in layers:
            if not 0 <= layer < generator.n_layers:
                raise ConfigError(f"layer {layer} outside 0..{generator.n_layers - 1}")
            if owner[layer] != -1:
                raise ConfigError(f"layer {layer} assigned twice")
            owner[layer] = i
    missing = [layer for layer, o in enumerate(owner) if o == -1]
    if missing:
        raise ConfigError(f"layers {missing} have no code assigned")
    for w in w_list:
        if w.shape[-1] != generator.latent_width:
            raise DimensionError(f"generator expects width {generator.latent_width}, got {w.shape[-1]}")
    ws = torch.stack([w_list[o] for o in owner], dim=-2)
    return generator.synthesize(ws)

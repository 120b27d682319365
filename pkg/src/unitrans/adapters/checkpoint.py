"""Adapters backed by checkpoint files.

``torchscript-generator``
    A TorchScript module exposing ``mapping(z) -> w`` for ``(B, z_dim)`` inputs and
    ``forward(ws) -> images`` for ``(B, L, d_w)`` inputs, images in [-1, 1].
    Export a StyleGAN2 ``G_ema`` with thin wrappers around ``G.mapping`` and
    ``G.synthesis`` (noise_mode='const') to meet this contract.

``hf-clip``
    A directory saved with ``transformers``' ``CLIPModel.save_pretrained``
    (plus the tokenizer files for text encoding).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from ..errors import AdapterError, DimensionError
from .base import Generator, ImageEncoder, TextEncoder, sha256_file

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


class TorchScriptGenerator(Generator):
    reentrant = False

    def __init__(self, path, latent_width: int, n_layers: int, resolution: int,
                 z_dim: int | None = None, truncation: float = 1.0):
        path = Path(path)
        try:
            self.module = torch.jit.load(str(path), map_location="cpu").eval()
        except Exception as exc:
            raise AdapterError(f"cannot load TorchScript generator {path}: {exc}") from exc
        self.latent_width = latent_width
        self.n_layers = n_layers
        self.resolution = resolution
        self.z_dim = z_dim or latent_width
        self.truncation = truncation
        self.fingerprint = sha256_file(path)[:16]
        self._probe()

    def _probe(self):
        with torch.no_grad():
            try:
                w = self.module.mapping(torch.zeros(1, self.z_dim))
            except Exception as exc:
                raise AdapterError(f"mapping probe failed: {exc}") from exc
            if w.shape[-1] != self.latent_width:
                raise DimensionError(
                    f"checkpoint produces W codes of width {w.shape[-1]}, registry says {self.latent_width}")
            img = self.module(w.reshape(1, 1, -1).expand(1, self.n_layers, -1).contiguous())
            if tuple(img.shape[-3:]) != (3, self.resolution, self.resolution):
                raise DimensionError(
                    f"checkpoint renders {tuple(img.shape[-3:])}, registry says 3x{self.resolution}x{self.resolution}")

    def sample_w(self, n, seed):
        rng = np.random.default_rng(seed)
        z = torch.as_tensor(rng.standard_normal((n, self.z_dim)), dtype=torch.float32)
        with torch.no_grad():
            return self.module.mapping(z).to(torch.float64)

    def synthesize(self, ws):
        single = ws.dim() == 2
        x = ws.unsqueeze(0) if single else ws
        img = self.module(x.to(torch.float32))
        img = ((img + 1) / 2).clamp(0, 1).to(ws.dtype)
        return img[0] if single else img


def _load_hf_clip(path):
    try:
        from transformers import CLIPModel
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise AdapterError("hf-clip adapters need the 'transformers' package") from exc
    try:
        model = CLIPModel.from_pretrained(str(path)).eval()
    except Exception as exc:
        raise AdapterError(f"cannot load CLIP checkpoint {path}: {exc}") from exc
    if model.config.projection_dim != 512:
        raise DimensionError(f"CLIP projection width {model.config.projection_dim}, expected 512")
    return model


def _dir_fingerprint(path: Path) -> str:
    files = sorted(p for p in path.iterdir() if p.suffix in {".bin", ".safetensors"})
    if not files:
        raise AdapterError(f"no weight files found in {path}")
    return sha256_file(files[0])[:16]


class HFClipImageEncoder(ImageEncoder):
    channel_mean = CLIP_MEAN
    channel_std = CLIP_STD
    reentrant = False

    def __init__(self, path, model=None):
        path = Path(path)
        self.model = model or _load_hf_clip(path)
        self.width = self.model.config.projection_dim
        self.input_resolution = self.model.config.vision_config.image_size
        self.fingerprint = _dir_fingerprint(path)

    def _embed(self, x):
        dtype = x.dtype
        out = self.model.get_image_features(pixel_values=x.to(torch.float32))
        if not torch.is_tensor(out):  # newer transformers return a model output
            out = out.pooler_output
        return out.to(dtype)


class HFClipTextEncoder(TextEncoder):
    reentrant = False

    def __init__(self, path, model=None):
        from transformers import CLIPTokenizer

        path = Path(path)
        self.model = model or _load_hf_clip(path)
        self.tokenizer = CLIPTokenizer.from_pretrained(str(path))
        self.width = self.model.config.projection_dim
        self.fingerprint = _dir_fingerprint(path)

    @torch.no_grad()
    def encode_text(self, text):
        tokens = self.tokenizer([text], padding=True, return_tensors="pt")
        out = self.model.get_text_features(**tokens)
        if not torch.is_tensor(out):
            out = out.pooler_output
        return out[0].to(torch.float64)

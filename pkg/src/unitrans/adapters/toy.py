"""Small deterministic stand-ins for the pretrained backbones.

The toy generator is built so its P-space distribution is exactly a diagonal
Gaussian with published mean and std (``p_mean``, ``p_std``).  A ``skew``
knob bends each coordinate with a sinh-arcsinh transform to manufacture
non-Gaussian P spaces of controllable severity.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
import torch
import torch.nn.functional as F

from ..latent import W_SLOPE
from .base import (Generator, ImageEncoder, PerceptualExtractor, TextEncoder,
                   tensor_fingerprint)

DTYPE = torch.float64


def _rng(seed: int, salt: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{salt}:{seed}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _smooth_patterns(rng, n, channels, coarse, resolution):
    base = torch.as_tensor(rng.standard_normal((n, channels, coarse, coarse)), dtype=DTYPE)
    return F.interpolate(base, size=(resolution, resolution), mode="bilinear", align_corners=False)


class ToyGenerator(Generator):
    """Seeded mapping ``z -> p -> w`` plus additive per-layer synthesis.

    ``image = sigmoid(bias + sum_l basis_l @ w_l)`` reshaped to 3 x R x R.
    """

    def __init__(self, latent_width: int = 16, resolution: int = 32, n_layers: int = 8,
                 seed: int = 0, skew: float = 0.0, coarse: int = 8, gain: float = 1.5):
        self.latent_width = latent_width
        self.resolution = resolution
        self.n_layers = n_layers
        self.seed = seed
        self.skew = float(skew)
        rng = _rng(seed, "toy-generator")
        d = latent_width
        self.p_mean = rng.uniform(-0.5, 0.5, d)
        self.p_std = rng.uniform(0.5, 1.5, d)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        self.rotation = q
        pats = _smooth_patterns(rng, n_layers * d, 3, coarse, resolution)
        scale = gain / np.sqrt(d * n_layers)
        # basis[l]: (3*R*R, d)
        self.basis = (pats.reshape(n_layers, d, -1).transpose(1, 2) * scale).contiguous()
        self.bias = _smooth_patterns(rng, 1, 3, coarse, resolution).reshape(-1) * 0.5
        self.fingerprint = tensor_fingerprint(
            self.basis, self.bias, torch.as_tensor(self.p_mean), torch.as_tensor(self.p_std),
            torch.as_tensor(self.rotation), tag=json.dumps(self.config(), sort_keys=True))

    def config(self) -> dict:
        return {"family": "toy-generator", "latent_width": self.latent_width,
                "resolution": self.resolution, "n_layers": self.n_layers,
                "seed": self.seed, "skew": self.skew}

    def map_z(self, z: np.ndarray) -> np.ndarray:
        """Mapping path in P space: rotate, optionally skew, then scale and shift."""
        u = z @ self.rotation.T
        if self.skew:
            u = np.sinh(np.arcsinh(u) + self.skew)
        return self.p_mean + self.p_std * u

    def sample_p(self, n: int, seed: int) -> torch.Tensor:
        z = _rng(seed, "toy-generator-z").standard_normal((n, self.latent_width))
        return torch.as_tensor(self.map_z(z), dtype=DTYPE)

    def sample_w(self, n: int, seed: int) -> torch.Tensor:
        p = self.sample_p(n, seed)
        return torch.where(p >= 0, p, p * W_SLOPE)

    def synthesize(self, ws: torch.Tensor) -> torch.Tensor:
        single = ws.dim() == 2
        if single:
            ws = ws.unsqueeze(0)
        basis = self.basis.to(ws.dtype)
        logits = self.bias.to(ws.dtype) + torch.einsum("lpd,bld->bp", basis, ws)
        img = torch.sigmoid(logits).reshape(-1, 3, self.resolution, self.resolution)
        return img[0] if single else img


class ToyImageEncoder(ImageEncoder):
    """Fixed seeded linear projection of 16 x 16 normalised pixels to 512 values."""

    def __init__(self, width: int = 512, input_resolution: int = 16, seed: int = 0):
        self.width = width
        self.input_resolution = input_resolution
        self.channel_mean = (0.5, 0.5, 0.5)
        self.channel_std = (0.25, 0.25, 0.25)
        rng = _rng(seed, "toy-image-encoder")
        n_in = 3 * input_resolution ** 2
        self.weight = torch.as_tensor(rng.standard_normal((width, n_in)) / np.sqrt(n_in), dtype=DTYPE)
        self.bias = torch.as_tensor(rng.standard_normal(width) * 0.5, dtype=DTYPE)
        self.fingerprint = tensor_fingerprint(self.weight, self.bias, tag=f"toy-image-encoder:{width}:{input_resolution}")

    def _embed(self, x):
        return x.flatten(1) @ self.weight.to(x.dtype).T + self.bias.to(x.dtype)


class ToyTextEncoder(TextEncoder):
    """Hashes each prompt to a seed and draws a Gaussian vector from it."""

    def __init__(self, width: int = 512, seed: int = 0):
        self.width = width
        self.seed = seed
        self.fingerprint = hashlib.sha256(f"toy-text-encoder:{width}:{seed}".encode()).hexdigest()[:16]

    def encode_text(self, text: str) -> torch.Tensor:
        digest = hashlib.sha256(f"{self.seed}:{text}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return torch.as_tensor(rng.standard_normal(self.width), dtype=DTYPE)


class ToyExtractor(PerceptualExtractor):
    """Two fixed random convolutions; the feature stack is both activations."""

    description = "conv3x3(3->8) > lrelu > conv3x3/2(8->16)"

    def __init__(self, seed: int = 0):
        rng = _rng(seed, "toy-extractor")
        self.w1 = torch.as_tensor(rng.standard_normal((8, 3, 3, 3)) / np.sqrt(27), dtype=DTYPE)
        self.w2 = torch.as_tensor(rng.standard_normal((16, 8, 3, 3)) / np.sqrt(72), dtype=DTYPE)
        self.fingerprint = tensor_fingerprint(self.w1, self.w2, tag="toy-extractor")

    def features(self, img):
        x = img.unsqueeze(0) if img.dim() == 3 else img
        f1 = F.leaky_relu(F.conv2d(x, self.w1.to(x.dtype), padding=1), 0.2)
        f2 = F.conv2d(f1, self.w2.to(x.dtype), stride=2, padding=1)
        return [f1, f2]

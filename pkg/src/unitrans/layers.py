"""Equalized-learning-rate linear layer.

Weights are stored at unit variance and scaled by ``1/sqrt(fan_in)`` in the
forward pass, so an Adam step of a given size changes every layer's output by
a comparable relative amount regardless of its width.  This is the
parametrisation the (beta1 = 0, beta2 = 0.99, lr = 0.002) Adam setting was
tuned for in style-based generators.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class EqualLinear(nn.Module):
    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.scale = 1.0 / math.sqrt(in_features)
        self.weight = nn.Parameter(torch.randn(out_features, in_features))
        self.bias = nn.Parameter(torch.zeros(out_features)) if bias else None

    @property
    def effective_weight(self) -> torch.Tensor:
        return self.weight * self.scale

    @torch.no_grad()
    def set_effective_weight(self, w: torch.Tensor):
        self.weight.copy_(torch.as_tensor(w, dtype=self.weight.dtype) / self.scale)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # scaling the input rather than the weight matrix is cheaper for small batches
        return F.linear(x * self.scale, self.weight, self.bias)

    def extra_repr(self) -> str:
        return f"in_features={self.in_features}, out_features={self.out_features}"

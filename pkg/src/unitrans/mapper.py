"""CLIP-to-P mapper: a linear layer followed by a learnable monotone map.

The monotone map bends a Gaussian into an asymmetric unimodal distribution::

    M(x) = exp(h (x - mu)) - 1        for x >  mu
    M(x) = 1 - exp(-j (x - mu))       for x <= mu

``h`` and ``j`` are kept positive through an exponential parametrisation.
"""

from __future__ import annotations

import logging

import torch
from torch import nn

from .errors import DimensionError, NumericError
from .layers import EqualLinear
from .latent import CLIP_WIDTH, GaussianStats, SpaceTag
from .decoupling import Reduction

log = logging.getLogger(__name__)

EXP_CLAMP = 30.0


def _clamped_exp(arg: torch.Tensor) -> torch.Tensor:
    if bool((arg.abs() > EXP_CLAMP).any()):
        log.warning("exponent clamped to +/-%g in monotone map (%d entries)",
                    EXP_CLAMP, int((arg.abs() > EXP_CLAMP).sum()))
    return torch.exp(arg.clamp(-EXP_CLAMP, EXP_CLAMP))


def map_nonlinear(x: torch.Tensor, h: torch.Tensor, j: torch.Tensor, mu: torch.Tensor) -> torch.Tensor:
    """Evaluate the monotone map with effective (already positive) ``h`` and ``j``.

    At the knee both branches are zero; the derivative there follows the
    upper branch.
    """
    if not torch.isfinite(x).all():
        raise NumericError("non-finite input to the monotone map")
    t = x - mu
    upper = _clamped_exp(h * t) - 1
    lower = 1 - _clamped_exp(-j * t)
    return torch.where(t >= 0, upper, lower)


def map_nonlinear_grad(x: torch.Tensor, h: torch.Tensor, j: torch.Tensor, mu: torch.Tensor) -> dict:
    """Closed-form partial derivatives of the map w.r.t. x, h_raw, j_raw and mu.

    ``h_raw``/``j_raw`` are the log-parameters, so d/dh_raw = h * d/dh.
    Returns elementwise derivatives (broadcast to the shape of ``x``).
    """
    t = x - mu
    up = t >= 0
    eh = torch.exp(h * t)
    ej = torch.exp(-j * t)
    dx = torch.where(up, h * eh, j * ej)
    zero = torch.zeros_like(dx)
    return {
        "x": dx,
        "h_raw": torch.where(up, t * eh * h, zero),
        "j_raw": torch.where(up, zero, t * ej * j),
        "mu": -dx,
    }


def inverse_map_nonlinear(y: torch.Tensor, h: torch.Tensor, j: torch.Tensor, mu: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`map_nonlinear` (the map is a bijection of the real line)."""
    upper = mu + torch.log1p(y.clamp_min(0)) / h
    lower = mu - torch.log1p(-y.clamp_max(0)) / j
    return torch.where(y >= 0, upper, lower)


class CLIP2PMapper(nn.Module):
    """Linear layer plus monotone map, with the learnable weight of the P-space prior.

    ``per_dim=False`` shares one (h, j, mu) triple across all output dimensions.
    """

    def __init__(self, d_w: int, width: int = CLIP_WIDTH, per_dim: bool = True,
                 lambda_p_init: float = 1.0):
        super().__init__()
        self.d_w = d_w
        self.width = width
        self.per_dim = per_dim
        self.linear = EqualLinear(width, d_w)
        n = d_w if per_dim else 1
        self.h_raw = nn.Parameter(torch.zeros(n))
        self.j_raw = nn.Parameter(torch.zeros(n))
        self.mu = nn.Parameter(torch.zeros(n))
        self.lambda_p = nn.Parameter(torch.tensor(float(lambda_p_init)))

    @property
    def h(self):
        return torch.exp(self.h_raw)

    @property
    def j(self):
        return torch.exp(self.j_raw)

    def nonlinear(self, x: torch.Tensor) -> torch.Tensor:
        return map_nonlinear(x, self.h, self.j, self.mu)

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        if v.shape[-1] != self.width:
            raise DimensionError(f"mapper expects width {self.width}, got {v.shape[-1]}")
        return self.nonlinear(self.linear(v))

    @torch.no_grad()
    def center_on(self, p_mean: torch.Tensor):
        """Set the linear bias so a zero pre-activation lands on ``p_mean``."""
        target = torch.as_tensor(p_mean, dtype=self.linear.bias.dtype)
        self.linear.bias.copy_(inverse_map_nonlinear(target, self.h, self.j, self.mu))

    def network_parameters(self):
        return [p for name, p in self.named_parameters() if name != "lambda_p"]

    def snapshot(self) -> dict:
        return {
            "h": self.h.detach().cpu().numpy().copy(),
            "j": self.j.detach().cpu().numpy().copy(),
            "mu": self.mu.detach().cpu().numpy().copy(),
            "lambda_p": float(self.lambda_p.detach()),
        }


def clip_to_p(v: torch.Tensor, mapper: CLIP2PMapper) -> torch.Tensor:
    return mapper(v)


def loss_g(z: torch.Tensor, stats_p: GaussianStats, q: torch.Tensor,
           reduction: Reduction = "mean") -> torch.Tensor:
    """L1 distance between the P-space Gaussian reading of ``z`` and the mapper output."""
    if stats_p.space_tag != SpaceTag.P:
        raise DimensionError(f"loss_g needs P statistics, got {stats_p.space_tag.value}")
    if z.shape[-1] != stats_p.dim or q.shape[-1] != stats_p.dim:
        raise DimensionError(
            f"z ({z.shape[-1]}), q ({q.shape[-1]}) and P statistics ({stats_p.dim}) must agree")
    mean, std = stats_p.tensors(q.dtype, q.device)
    diff = (std * z + mean - q).abs()
    per_item = diff.mean(-1) if reduction == "mean" else diff.sum(-1)
    return per_item.mean()


def loss_p(lambda_p, l_g):
    """Prior term weighted by ReLU of the learnable ``lambda_p``."""
    if torch.is_tensor(lambda_p):
        return torch.relu(lambda_p) * l_g
    return max(lambda_p, 0.0) * l_g

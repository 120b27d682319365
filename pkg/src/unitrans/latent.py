"""Latent code spaces and the transforms between them.

Four spaces are in play: the sphere-constrained input space Z, the CLIP
embedding space, the generator's native style space W and its "deactivated"
counterpart P, where ``p = LeakyReLU_5(w)``.  Z and CLIP are tied together by
an elementwise affine map built from per-dimension Gaussian statistics.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import torch
from scipy.spatial import cKDTree

from .errors import ConfigError, DimensionError, InsufficientDataError, NumericError

log = logging.getLogger(__name__)

STD_FLOOR = 1e-4
CLIP_WIDTH = 512
W_SLOPE = 0.2
P_SLOPE = 1.0 / W_SLOPE
KNN_K = 5


class SpaceTag(str, enum.Enum):
    CLIP = "CLIP"
    P = "P"


@dataclass(frozen=True)
class GaussianStats:
    """Diagonal Gaussian summary of an embedding population."""

    mean: np.ndarray
    std: np.ndarray
    n_samples: int
    space_tag: SpaceTag
    domain_name: str = ""
    normalized: bool = False

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if mean.shape != std.shape:
            raise DimensionError(f"mean has {mean.size} dims but std has {std.size}")
        if np.any(std < STD_FLOOR):
            raise NumericError(f"std entries must be >= {STD_FLOOR}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "space_tag", SpaceTag(self.space_tag))

    @property
    def dim(self) -> int:
        return self.mean.size

    def tensors(self, dtype=torch.float64, device=None) -> tuple[torch.Tensor, torch.Tensor]:
        return (
            torch.as_tensor(self.mean, dtype=dtype, device=device),
            torch.as_tensor(self.std, dtype=dtype, device=device),
        )

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.mean + self.std * rng.standard_normal((n, self.dim))

    def to_dict(self) -> dict:
        return {
            "domain_name": self.domain_name,
            "space_tag": self.space_tag.value,
            "n_samples": int(self.n_samples),
            "normalized": bool(self.normalized),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianStats":
        return cls(
            mean=np.array(d["mean"], dtype=np.float64),
            std=np.array(d["std"], dtype=np.float64),
            n_samples=int(d["n_samples"]),
            space_tag=SpaceTag(d["space_tag"]),
            domain_name=d.get("domain_name", ""),
            normalized=bool(d.get("normalized", False)),
        )

    def __eq__(self, other):
        if not isinstance(other, GaussianStats):
            return NotImplemented
        return (
            np.array_equal(self.mean, other.mean)
            and np.array_equal(self.std, other.std)
            and self.n_samples == other.n_samples
            and self.space_tag == other.space_tag
            and self.domain_name == other.domain_name
            and self.normalized == other.normalized
        )


@dataclass
class LatentBundle:
    """The codes that travel together through one translation."""

    z: torch.Tensor
    v: torch.Tensor
    q: torch.Tensor
    w: torch.Tensor
    extras: dict = field(default_factory=dict)

    def numpy(self) -> dict[str, np.ndarray]:
        out = {k: getattr(self, k).detach().cpu().numpy() for k in ("z", "v", "q", "w")}
        out.update({k: v.detach().cpu().numpy() for k, v in self.extras.items()})
        return out


def _check_finite(x):
    finite = torch.isfinite(x).all() if torch.is_tensor(x) else np.isfinite(x).all()
    if not finite:
        raise NumericError("non-finite entries in latent code")


def z_to_clip(z, stats: GaussianStats):
    """Map a Z code to a CLIP embedding: ``v = std * z + mean`` elementwise."""
    if stats.space_tag != SpaceTag.CLIP:
        raise DimensionError(f"z_to_clip needs CLIP statistics, got {stats.space_tag.value}")
    if z.shape[-1] != stats.dim:
        raise DimensionError(f"z has width {z.shape[-1]}, CLIP statistics have {stats.dim}")
    if torch.is_tensor(z):
        mean, std = stats.tensors(z.dtype, z.device)
        return std * z + mean
    return stats.std * np.asarray(z) + stats.mean


def _leaky(x, slope: float):
    _check_finite(x)
    if torch.is_tensor(x):
        return torch.where(x >= 0, x, x * slope)
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, x * slope)


def p_to_w(q):
    """P space to W space (LeakyReLU with slope 0.2)."""
    return _leaky(q, W_SLOPE)


def w_to_p(w):
    """W space to P space (LeakyReLU with slope 5.0), the exact inverse of :func:`p_to_w`."""
    return _leaky(w, P_SLOPE)


def fit_gaussian(samples, space_tag: SpaceTag | str, domain_name: str = "",
                 normalized: bool = False) -> GaussianStats:
    """Per-dimension mean and unbiased std, floored at :data:`STD_FLOOR`."""
    x = samples.detach().cpu().numpy() if torch.is_tensor(samples) else np.asarray(samples)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected an (n, d) sample matrix, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples to fit a Gaussian, got {n}")
    # sort each column so the reduction order (and so the result) ignores sample order
    xs = np.sort(x, axis=0)
    mean = xs.mean(axis=0)
    std = np.sqrt(((xs - mean) ** 2).sum(axis=0) / (n - 1))
    return GaussianStats(
        mean=mean,
        std=np.maximum(std, STD_FLOOR),
        n_samples=n,
        space_tag=SpaceTag(space_tag),
        domain_name=domain_name,
        normalized=normalized,
    )


def gaussian_kl(p: GaussianStats, q: GaussianStats) -> float:
    """Closed-form KL(p || q) between two diagonal Gaussians, in nats."""
    if p.dim != q.dim:
        raise DimensionError(f"dimension mismatch: {p.dim} vs {q.dim}")
    var_p, var_q = p.std ** 2, q.std ** 2
    terms = np.log(q.std / p.std) + (var_p + (p.mean - q.mean) ** 2) / (2 * var_q) - 0.5
    return float(terms.sum())


def knn_kl(x: np.ndarray, y: np.ndarray, k: int = KNN_K) -> float:
    """Two-sample k-nearest-neighbour estimate of KL(P || Q).

    ``x`` is drawn from P and ``y`` from Q.  Uses the ratio of the k-th
    neighbour distance of each ``x_i`` within ``y`` to its k-th neighbour
    distance within the rest of ``x``.  Not clamped; can be slightly negative.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    n, d = x.shape
    m = y.shape[0]
    if n < k + 1 or m < k:
        raise InsufficientDataError(f"k={k} needs at least {k + 1} samples per population")
    rho = cKDTree(x).query(x, k=[k + 1])[0][:, 0]
    nu = cKDTree(y).query(x, k=[k])[0][:, 0]
    tiny = np.finfo(np.float64).tiny
    rho = np.maximum(rho, tiny)
    nu = np.maximum(nu, tiny)
    return float(d * np.mean(np.log(nu / rho)) + math.log(m / (n - 1)))


Direction = Literal["forward", "reverse"]


def kl_divergence(samples_p, samples_q, direction: Direction = "forward", *,
                  method: Literal["auto", "knn", "gaussian"] = "auto",
                  k: int = KNN_K, seed: int = 0) -> float:
    """Estimate the KL divergence between two populations, in nats.

    ``direction="forward"`` gives KL(P || Q), ``"reverse"`` gives KL(Q || P).
    ``samples_q`` may be a :class:`GaussianStats` instead of a sample matrix.

    With ``method="auto"`` two sample sets go through the k-NN estimator and a
    sample set against ``GaussianStats`` goes through the closed form after
    fitting a diagonal Gaussian to the samples.  ``method="knn"`` against
    ``GaussianStats`` first draws a seeded sample of the same size from it.
    The result is clamped at zero.
    """
    if direction not in ("forward", "reverse"):
        raise ConfigError(f"unknown direction {direction!r}")
    x = samples_p.detach().cpu().numpy() if torch.is_tensor(samples_p) else np.asarray(samples_p)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    q_is_stats = isinstance(samples_q, GaussianStats)
    if not q_is_stats:
        y = samples_q.detach().cpu().numpy() if torch.is_tensor(samples_q) else np.asarray(samples_q)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[1] != x.shape[1]:
            raise DimensionError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    elif samples_q.dim != x.shape[1]:
        raise DimensionError(f"dimension mismatch: {x.shape[1]} vs {samples_q.dim}")

    if method == "auto":
        method = "gaussian" if q_is_stats else "knn"

    if method == "gaussian":
        p_fit = fit_gaussian(x, SpaceTag.P)
        q_fit = samples_q if q_is_stats else fit_gaussian(y, SpaceTag.P)
        a, b = (p_fit, q_fit) if direction == "forward" else (q_fit, p_fit)
        est = gaussian_kl(a, b)
    elif method == "knn":
        if q_is_stats:
            y = samples_q.sample(x.shape[0], seed=seed)
        a, b = (x, y) if direction == "forward" else (y, x)
        est = knn_kl(a, b, k=k)
    else:
        raise ConfigError(f"unknown method {method!r}")
    if est < 0:
        log.debug("clamping negative KL estimate %.3g to zero", est)
    return max(est, 0.0)


def sample_sphere(dim: int, seed: int, dtype=torch.float64) -> torch.Tensor:
    """Standard normal draw rescaled to the sphere of radius ``sqrt(dim)``."""
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(dim)
    z *= math.sqrt(dim) / np.linalg.norm(z)
    return torch.as_tensor(z, dtype=dtype)


def project_sphere(z: torch.Tensor, radius) -> torch.Tensor:
    """Rescale ``z`` to ``radius``; the scaling runs in float64 so float32 codes land within an ulp."""
    z64 = z.to(torch.float64)
    r = torch.as_tensor(radius, dtype=torch.float64)
    return (z64 * (r / z64.norm(dim=-1, keepdim=True))).to(z.dtype)

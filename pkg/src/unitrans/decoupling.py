"""Two-stream feature decoupling in CLIP space.

Each stream (source image embedding, target code embedding) goes through a
shared MLP that emits 1024 values; the first half is read as domain-specific
features and the second half as domain-agnostic features.  A second shared
MLP rebuilds the 512-d embedding from the concatenated halves.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Literal, Sequence

import torch
from torch import nn

from .errors import AdapterError, ConfigError, DegenerateInputError, DimensionError, NumericError
from .layers import EqualLinear
from .latent import CLIP_WIDTH

Reduction = Literal["mean", "sum"]


def load_templates() -> list[str]:
    text = resources.files("unitrans").joinpath("assets/templates.txt").read_text()
    return [line for line in text.splitlines() if line.strip()]


@dataclass
class DecoupledPair:
    f_s: torch.Tensor
    f_a: torch.Tensor
    stream: Literal["source", "target"] = "target"


@dataclass
class PromptBank:
    m_t_src: torch.Tensor
    m_t_tar: torch.Tensor
    class_src: str
    class_tar: str
    n_templates: int


def _mean_prompt_embedding(class_name, templates, text_encoder, normalize):
    if not class_name:
        raise ConfigError("class name must be nonempty")
    embeddings = []
    for template in templates:
        try:
            e = text_encoder.encode_text(template.format(class_name))
        except Exception as exc:  # adapter failures surface uniformly
            raise AdapterError(f"text encoder failed on {template!r}: {exc}") from exc
        e = torch.as_tensor(e, dtype=torch.float64).reshape(-1)
        if normalize:
            e = e / e.norm()
        embeddings.append(e)
    return torch.stack(embeddings).mean(dim=0)


def build_prompt_bank(class_src: str, class_tar: str, text_encoder,
                      templates: Sequence[str] | None = None,
                      normalize: bool = False) -> PromptBank:
    """Average the text embeddings of every template filled with each class name."""
    templates = list(templates) if templates is not None else load_templates()
    return PromptBank(
        m_t_src=_mean_prompt_embedding(class_src, templates, text_encoder, normalize),
        m_t_tar=_mean_prompt_embedding(class_tar, templates, text_encoder, normalize),
        class_src=class_src,
        class_tar=class_tar,
        n_templates=len(templates),
    )


def _mlp(d_in, d_hidden, d_out):
    return nn.Sequential(EqualLinear(d_in, d_hidden), nn.LeakyReLU(0.2), EqualLinear(d_hidden, d_out))


class Decoupler(nn.Module):
    """MLP1 (512 -> 1024 -> 1024) and MLP2 (1024 -> 1024 -> 512), shared by both streams."""

    def __init__(self, width: int = CLIP_WIDTH, hidden: int = 2 * CLIP_WIDTH):
        super().__init__()
        self.width = width
        self.mlp1 = _mlp(width, hidden, 2 * width)
        self.mlp2 = _mlp(2 * width, hidden, width)

    def split(self, x: torch.Tensor, stream="target") -> DecoupledPair:
        if not torch.isfinite(x).all():
            raise NumericError("non-finite embedding fed to the decoupler")
        if x.shape[-1] != self.width:
            raise DimensionError(f"decoupler expects width {self.width}, got {x.shape[-1]}")
        h = self.mlp1(x)
        return DecoupledPair(h[..., : self.width], h[..., self.width:], stream)

    def reconstruct(self, pair: DecoupledPair) -> torch.Tensor:
        return self.mlp2(torch.cat([pair.f_s, pair.f_a], dim=-1))


def cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity along the last axis; zero-norm inputs are an error."""
    na, nb = a.norm(dim=-1), b.norm(dim=-1)
    if bool((na == 0).any()) or bool((nb == 0).any()):
        raise DegenerateInputError("cosine of a zero-norm vector")
    return (a * b).sum(-1) / (na * nb)


def l1(a: torch.Tensor, b: torch.Tensor, reduction: Reduction = "mean") -> torch.Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    diff = (a - b).abs()
    per_item = diff.mean(-1) if reduction == "mean" else diff.sum(-1)
    return per_item.mean()


def loss_orthogonal(tar: DecoupledPair, src: DecoupledPair, squared: bool = False) -> torch.Tensor:
    """Sum of the within-stream cosines between specific and agnostic halves.

    The raw cosine sum lies in [-2, 2]; ``squared=True`` sums cos^2 instead so
    the minimum sits at orthogonality.
    """
    ct = cosine(tar.f_s, tar.f_a)
    cs = cosine(src.f_s, src.f_a)
    if squared:
        ct, cs = ct ** 2, cs ** 2
    return (ct + cs).mean()


def loss_specific(f_s_tar, f_s_src, bank: PromptBank) -> torch.Tensor:
    m_tar = bank.m_t_tar.to(f_s_tar)
    m_src = bank.m_t_src.to(f_s_src)
    return ((1 - cosine(m_tar, f_s_tar)) + (1 - cosine(m_src, f_s_src))).mean()


def loss_agnostic(f_a_tar, f_a_src, reduction: Reduction = "mean") -> torch.Tensor:
    return l1(f_a_tar, f_a_src, reduction)


def loss_reconstruction(v, v_rec_tar, m_i_src, m_rec_src, reduction: Reduction = "mean") -> torch.Tensor:
    return l1(v, v_rec_tar, reduction) + l1(m_i_src, m_rec_src, reduction)


@dataclass
class DecouplingLosses:
    orthogonal: torch.Tensor
    specific: torch.Tensor
    agnostic: torch.Tensor
    reconstruction: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.orthogonal + self.specific + self.agnostic + self.reconstruction


@dataclass
class DecouplingOutput:
    tar: DecoupledPair
    src: DecoupledPair
    v_rec_tar: torch.Tensor
    m_rec_src: torch.Tensor
    losses: DecouplingLosses


def decoupling_loss(parts: DecouplingLosses | Sequence[torch.Tensor]) -> torch.Tensor:
    """Unweighted sum of the orthogonality, specificity, agnostic and reconstruction terms."""
    if isinstance(parts, DecouplingLosses):
        return parts.total
    l_o, l_s, l_a, l_rec = parts
    return l_o + l_s + l_a + l_rec


def run_decoupler(decoupler: Decoupler, v: torch.Tensor, m_i_src: torch.Tensor,
                  bank: PromptBank, *, reduction: Reduction = "mean",
                  squared_orthogonal: bool = False) -> DecouplingOutput:
    """Push both streams through the decoupler and evaluate every term."""
    tar = decoupler.split(v, "target")
    src = decoupler.split(m_i_src, "source")
    v_rec = decoupler.reconstruct(tar)
    m_rec = decoupler.reconstruct(src)
    losses = DecouplingLosses(
        orthogonal=loss_orthogonal(tar, src, squared=squared_orthogonal),
        specific=loss_specific(tar.f_s, src.f_s, bank),
        agnostic=loss_agnostic(tar.f_a, src.f_a, reduction),
        reconstruction=loss_reconstruction(v, v_rec, m_i_src, m_rec, reduction),
    )
    return DecouplingOutput(tar, src, v_rec, m_rec, losses)


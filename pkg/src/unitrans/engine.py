"""Per-image hybrid optimisation loop.

Each iteration first moves the sphere-constrained code ``z`` with the network
parameters frozen (plain gradient step, then re-projection onto the sphere),
then updates the decoupler, the mapper and ``lambda_p`` with ``z`` frozen
(Adam, beta1 = 0).  Both steps minimise the same total objective.

Forward path for a code ``z``::

    v = std_clip * z + mean_clip
    (f_s, f_a) = MLP1(v);  v_rec = MLP2(f_s ++ f_a)
    q = CLIP2P(v_rec);  I_tar = G(LeakyReLU_0.2(q))
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .decoupling import Decoupler, PromptBank, build_prompt_bank, run_decoupler
from .domain_stats import DomainStatsBundle
from .errors import ConfigError, DimensionError, MissingArtifactError, NumericError
from .latent import LatentBundle, p_to_w, project_sphere, sample_sphere, z_to_clip
from .mapper import CLIP2PMapper, loss_g, loss_p
from .objectives import (LossBreakdown, Mask, cycle_pass, generate, loss_lpips,
                         loss_mse, total_loss)

log = logging.getLogger(__name__)

_DTYPES = {"float64": torch.float64, "float32": torch.float32}


@dataclass
class Hyperparams:
    n_iterations: int = 35
    lr_z: float = 0.4
    lr_params: float = 0.002
    lr_lambda_p: float = 0.1
    beta1: float = 0.0
    beta2: float = 0.99
    lambda_mse: float = 10.0
    lambda_p_init: float = 1.0
    seed: int = 0
    z_steps: int = 1
    param_steps: int = 1
    reduction: str = "mean"
    squared_orthogonal: bool = False
    per_dim_mapper: bool = True
    normalize_prompts: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("lr_z", "lr_params", "lr_lambda_p"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_iterations < 1 or self.z_steps < 1 or self.param_steps < 1:
            raise ConfigError("iteration and step counts must be >= 1")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError(f"reduction must be 'mean' or 'sum', got {self.reduction!r}")
        if self.dtype not in _DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(_DTYPES)}")

    @property
    def torch_dtype(self):
        return _DTYPES[self.dtype]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)


class SphericalOptimizer:
    """Gradient descent on a sphere: SGD step, then rescale to the original radius."""

    def __init__(self, params, lr: float):
        self.params = list(params)
        self.opt = torch.optim.SGD(self.params, lr=lr)
        with torch.no_grad():
            self.radii = [p.to(torch.float64).norm(dim=-1, keepdim=True) for p in self.params]

    def zero_grad(self):
        self.opt.zero_grad(set_to_none=True)

    @torch.no_grad()
    def step(self):
        self.opt.step()
        for p, r in zip(self.params, self.radii):
            p.copy_(project_sphere(p, r))


@dataclass
class IterationState:
    iteration: int
    z: torch.Tensor
    trace: list[LossBreakdown] = field(default_factory=list)
    mapper_trajectory: list[dict] = field(default_factory=list)


@dataclass
class TranslationResult:
    image: torch.Tensor
    latents: LatentBundle
    trace: list[dict]
    mapper_trajectory: list[dict]
    seed: int
    config: dict
    decoupler_state: dict
    mapper_state: dict
    z_norms: list[float] = field(default_factory=list)

    def save(self, directory, extra_config: dict | None = None) -> Path:
        """Write output.png, trace.csv, mapper_trajectory.csv, latents.bin,
        config.snapshot and params.pt into ``directory``."""
        from .applications import save_png

        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        save_png(self.image, out / "output.png")
        write_csv(out / "trace.csv", self.trace)
        write_csv(out / "mapper_trajectory.csv", trajectory_rows(self.mapper_trajectory))
        save_latents(self.latents, out / "latents.bin")
        snapshot = {**self.config, "seed": self.seed, **(extra_config or {})}
        (out / "config.snapshot").write_text(json.dumps(snapshot, indent=1, sort_keys=True))
        torch.save({"decoupler": self.decoupler_state, "mapper": self.mapper_state}, out / "params.pt")
        return out


@dataclass
class Forward:
    """Everything computed by one evaluation of the objective."""

    losses: LossBreakdown
    v: torch.Tensor
    v_rec: torch.Tensor
    q: torch.Tensor
    image: torch.Tensor


def _detached(losses: LossBreakdown) -> LossBreakdown:
    return LossBreakdown(**{k: (v.detach() if torch.is_tensor(v) else v)
                            for k, v in losses.__dict__.items()})


def params_digest(*modules) -> str:
    h = hashlib.sha256()
    for m in modules:
        for name, p in sorted(m.state_dict().items()):
            h.update(name.encode())
            h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def tensor_digest(t: torch.Tensor) -> str:
    return hashlib.sha256(t.detach().cpu().contiguous().numpy().tobytes()).hexdigest()


class Translator:
    """Owns one decoupler/mapper pair and the optimisers for a single translation.

    Not thread-safe; build one instance per concurrent translation.
    """

    def __init__(self, generator, image_encoder, text_encoder, extractor,
                 stats: DomainStatsBundle, class_src: str, class_tar: str,
                 hyperparams: Hyperparams | None = None, bank: PromptBank | None = None):
        self.hp = hyperparams or Hyperparams()
        self.generator = generator
        self.image_encoder = image_encoder
        self.text_encoder = text_encoder
        self.extractor = extractor
        self.stats = stats
        self.class_src, self.class_tar = class_src, class_tar
        dtype = self.hp.torch_dtype
        if stats.p_stats.dim != generator.latent_width:
            raise DimensionError(
                f"P statistics have {stats.p_stats.dim} dims, generator latent width is {generator.latent_width}")
        if stats.p_stats.dim > stats.clip_stats.dim:
            raise DimensionError("P space may not be wider than the CLIP space")
        self.d_z = stats.clip_stats.dim
        self.radius = math.sqrt(self.d_z)

        bank = bank or build_prompt_bank(class_src, class_tar, text_encoder,
                                         normalize=self.hp.normalize_prompts)
        self.bank = PromptBank(bank.m_t_src.to(dtype), bank.m_t_tar.to(dtype),
                               bank.class_src, bank.class_tar, bank.n_templates)

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.hp.seed)
            self.decoupler = Decoupler(self.d_z).to(dtype)
            self.mapper = CLIP2PMapper(generator.latent_width, self.d_z,
                                       per_dim=self.hp.per_dim_mapper,
                                       lambda_p_init=self.hp.lambda_p_init).to(dtype)
        p_mean, _ = stats.p_stats.tensors(dtype)
        self.mapper.center_on(p_mean)

        self.param_opt = torch.optim.Adam(
            [
                {"params": list(self.decoupler.parameters()) + self.mapper.network_parameters(),
                 "lr": self.hp.lr_params},
                {"params": [self.mapper.lambda_p], "lr": self.hp.lr_lambda_p},
            ],
            betas=(float(self.hp.beta1), float(self.hp.beta2)),
            foreach=True,
        )

    # -- objective -----------------------------------------------------------------

    def network_parameters(self):
        return list(self.decoupler.parameters()) + list(self.mapper.parameters())

    def forward(self, z: torch.Tensor, I_src: torch.Tensor, mask: Mask | None = None,
                m_i_src: torch.Tensor | None = None) -> Forward:
        hp = self.hp
        if m_i_src is None:
            m_i_src = self.encode_source(I_src, mask)
        v = z_to_clip(z, self.stats.clip_stats)
        dec = run_decoupler(self.decoupler, v, m_i_src, self.bank, reduction=hp.reduction,
                            squared_orthogonal=hp.squared_orthogonal)
        q = self.mapper(dec.v_rec_tar)
        image = generate(q, self.generator)
        l_g = loss_g(z[..., : self.generator.latent_width], self.stats.p_stats, q, hp.reduction)
        l_p = loss_p(self.mapper.lambda_p, l_g)
        l_mse = loss_mse(image, I_src, mask, hp.reduction)
        l_lpips = loss_lpips(image, I_src, self.extractor, mask)
        _, l_cycle, _ = cycle_pass(image, self.image_encoder, self.mapper, self.generator, hp.reduction)
        losses = total_loss(l_mse, l_lpips, dec.losses, l_cycle, l_p, hp.lambda_mse, g=l_g)
        return Forward(losses, v, dec.v_rec_tar, q, image)

    def encode_source(self, I_src, mask=None) -> torch.Tensor:
        """Source-stream CLIP embedding; masked-out pixels are zeroed before encoding."""
        x = I_src.to(self.hp.torch_dtype)
        if mask is not None:
            m = mask.array if isinstance(mask, Mask) else torch.as_tensor(mask)
            x = x * m.to(x.dtype)
        with torch.no_grad():
            return self.image_encoder.encode(x).to(self.hp.torch_dtype)

    # -- the two steps -------------------------------------------------------------

    def _check(self, loss: torch.Tensor, params, what: str, z=None):
        if not torch.isfinite(loss):
            raise NumericError(f"non-finite loss during {what}", state=self._dump(z))
        grads = [p.grad for p in params if p.grad is not None]
        if grads and not torch.isfinite(torch.stack(torch._foreach_norm(grads))).all():
            raise NumericError(f"non-finite gradient during {what}", state=self._dump(z))

    def _dump(self, z=None) -> dict:
        state = {"mapper": self.mapper.snapshot(), "hyperparams": self.hp.to_dict()}
        if z is not None:
            state["z"] = z.detach().cpu().numpy().tolist()
        return state

    def step_latent(self, state: IterationState, I_src, mask=None, m_i_src=None,
                    objective=None, record: bool = False) -> IterationState:
        """Update ``z`` with the network parameters frozen.

        ``objective(z) -> scalar`` replaces the translation objective when given.
        With ``record`` the loss breakdown at the pre-update state is appended
        to the trace.
        """
        z = state.z.detach().clone().requires_grad_(True)
        opt = SphericalOptimizer([z], lr=self.hp.lr_z)
        frozen = self.network_parameters()
        for p in frozen:
            p.requires_grad_(False)
        try:
            for k in range(self.hp.z_steps):
                opt.zero_grad()
                if objective is not None:
                    loss = objective(z)
                else:
                    losses = self.forward(z, I_src, mask, m_i_src).losses
                    loss = losses.total
                    if record and k == 0:
                        state.trace.append(_detached(losses))
                loss.backward()
                self._check(loss, [z], "latent step", z)
                opt.step()
        finally:
            for p in frozen:
                p.requires_grad_(True)
        return IterationState(state.iteration, z.detach(), state.trace, state.mapper_trajectory)

    def step_params(self, state: IterationState, I_src, mask=None, m_i_src=None,
                    objective=None) -> IterationState:
        """Update decoupler, mapper and ``lambda_p`` with ``z`` frozen."""
        z = state.z.detach()
        params = self.network_parameters()
        for _ in range(self.hp.param_steps):
            self.param_opt.zero_grad(set_to_none=True)
            if objective is not None:
                loss = objective(z)
            else:
                loss = self.forward(z, I_src, mask, m_i_src).losses.total
            loss.backward()
            self._check(loss, params, "parameter step", z)
            self.param_opt.step()
        return IterationState(state.iteration, z, state.trace, state.mapper_trajectory)

    # -- full loop -----------------------------------------------------------------

    def initial_state(self) -> IterationState:
        return IterationState(0, sample_sphere(self.d_z, self.hp.seed, self.hp.torch_dtype))

    def translate(self, I_src: torch.Tensor, mask: Mask | None = None) -> TranslationResult:
        hp = self.hp
        I_src = I_src.to(hp.torch_dtype)
        if mask is not None:
            mask = mask if isinstance(mask, Mask) else Mask(mask)
            if tuple(mask.array.shape) != tuple(I_src.shape[-2:]):
                raise DimensionError(
                    f"mask is {tuple(mask.array.shape)} but the source image is {tuple(I_src.shape[-2:])}")
        m_i_src = self.encode_source(I_src, mask)
        state = self.initial_state()
        z_norms = []
        for i in range(1, hp.n_iterations + 1):
            state.iteration = i
            state.mapper_trajectory.append(self.mapper.snapshot())
            state = self.step_latent(state, I_src, mask, m_i_src, record=True)
            norm = float(state.z.to(torch.float64).norm())
            z_norms.append(norm)
            if abs(norm - self.radius) > 1e-5 * self.radius:
                raise NumericError(f"sphere constraint violated at iteration {i}", state=self._dump(state.z))
            state = self.step_params(state, I_src, mask, m_i_src)

        with torch.no_grad():
            final = self.forward(state.z, I_src, mask, m_i_src)
        latents = LatentBundle(z=state.z, v=final.v, q=final.q, w=p_to_w(final.q),
                               extras={"v_rec": final.v_rec})
        return TranslationResult(
            image=final.image.detach(),
            latents=latents,
            trace=[b.as_floats() for b in state.trace],
            mapper_trajectory=state.mapper_trajectory,
            seed=hp.seed,
            config=self.config_snapshot(mask),
            decoupler_state=copy.deepcopy(self.decoupler.state_dict()),
            mapper_state=copy.deepcopy(self.mapper.state_dict()),
            z_norms=z_norms,
        )

    def config_snapshot(self, mask=None) -> dict:
        return {
            "hyperparams": self.hp.to_dict(),
            "class_src": self.class_src,
            "class_tar": self.class_tar,
            "domain": self.stats.domain_name,
            "n_templates": self.bank.n_templates,
            "masked": mask is not None,
            "fingerprints": {
                "generator": self.generator.fingerprint,
                "image_encoder": self.image_encoder.fingerprint,
                "text_encoder": self.text_encoder.fingerprint,
                "extractor": self.extractor.fingerprint,
                "stats_generator": self.stats.generator_fingerprint,
                "stats_encoder": self.stats.encoder_fingerprint,
            },
        }


def translate(I_src, generator, image_encoder, text_encoder, extractor, stats,
              class_src: str, class_tar: str, hyperparams: Hyperparams | None = None,
              mask=None) -> TranslationResult:
    """One-shot convenience wrapper around :class:`Translator`."""
    engine = Translator(generator, image_encoder, text_encoder, extractor, stats,
                        class_src, class_tar, hyperparams)
    return engine.translate(I_src, mask)


def mahalanobis_within(q: torch.Tensor, stats_p, n_sigma: float = 4.0) -> bool:
    """True when every coordinate of ``q`` lies within ``n_sigma`` std of the P mean."""
    mean, std = stats_p.tensors(q.dtype)
    return bool((((q - mean) / std).abs() <= n_sigma).all())


def trace_array(result: TranslationResult, key: str = "total") -> np.ndarray:
    return np.array([t[key] for t in result.trace])


def write_csv(path, rows: list[dict]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if rows:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return path


def trajectory_rows(trajectory: list[dict]) -> list[dict]:
    """Flatten per-iteration mapper snapshots into one CSV row each."""
    rows = []
    for i, snap in enumerate(trajectory, start=1):
        row = {"iteration": i, "lambda_p": snap["lambda_p"]}
        for key in ("h", "j", "mu"):
            for d, v in enumerate(np.atleast_1d(snap[key])):
                row[f"{key}_{d}"] = float(v)
        rows.append(row)
    return rows


def save_latents(bundle: LatentBundle, path) -> Path:
    path = Path(path)
    # write through a handle so numpy keeps the .bin name
    with path.open("wb") as fh:
        np.savez(fh, **bundle.numpy())
    return path


def load_latents(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"latents file {path} not found")
    with np.load(path) as data:
        return {k: data[k] for k in data.files}

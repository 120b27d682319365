"""Target-domain statistics: sample the generator, encode, fit, diagnose, cache.

A cache file holds the CLIP- and P-space Gaussians for one target domain,
the KL diagnostics comparing the true P distribution with its Gaussian fit
and with the CLIP distribution, and the fingerprints of the generator and
encoder it was computed with.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import (ConfigError, FingerprintError, InsufficientDataError,
                     MissingStatsError)
from .latent import KNN_K, GaussianStats, SpaceTag, fit_gaussian, kl_divergence, w_to_p

SCHEMA = "unitrans.stats/1"
HOME_ENV = "UNITRANS_HOME"

KL_KEYS = (
    "P(true)||P(pseudo)",
    "P(pseudo)||P(true)",
    "P(true)||CLIP(true)",
    "CLIP(true)||P(true)",
)


@dataclass
class DomainStatsBundle:
    domain_name: str
    clip_stats: GaussianStats
    p_stats: GaussianStats
    kl_report: dict[str, float]
    n_samples: int
    seed: int
    generator_fingerprint: str
    encoder_fingerprint: str
    estimator: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "domain_name": self.domain_name,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "generator_fingerprint": self.generator_fingerprint,
            "encoder_fingerprint": self.encoder_fingerprint,
            "estimator": self.estimator,
            "kl_report": self.kl_report,
            "clip_stats": self.clip_stats.to_dict(),
            "p_stats": self.p_stats.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainStatsBundle":
        if d.get("schema") != SCHEMA:
            raise ConfigError(f"unsupported stats schema {d.get('schema')!r}")
        return cls(
            domain_name=d["domain_name"],
            clip_stats=GaussianStats.from_dict(d["clip_stats"]),
            p_stats=GaussianStats.from_dict(d["p_stats"]),
            kl_report={k: float(v) for k, v in d["kl_report"].items()},
            n_samples=int(d["n_samples"]),
            seed=int(d["seed"]),
            generator_fingerprint=d["generator_fingerprint"],
            encoder_fingerprint=d["encoder_fingerprint"],
            estimator=d.get("estimator", {}),
        )


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def sample_domain(generator, image_encoder, n: int, seed: int, batch_size: int = 250):
    """Draw ``n`` codes in fixed-size batches with per-batch derived seeds.

    Returns ``(p_codes, clip_embeddings)`` as float64 arrays.
    """
    ps, embs = [], []
    with torch.no_grad():
        for b, start in enumerate(range(0, n, batch_size)):
            size = min(batch_size, n - start)
            w = generator.sample_w(size, derive_seed(seed, b))
            emb = image_encoder.encode(generator.generate(w))
            ps.append(w_to_p(w).to(torch.float64).cpu().numpy())
            embs.append(emb.to(torch.float64).cpu().numpy())
    return np.concatenate(ps), np.concatenate(embs)


def kl_diagnostics(p_codes: np.ndarray, clip_embs: np.ndarray, p_stats: GaussianStats,
                   k: int = KNN_K, seed: int = 0) -> tuple[dict[str, float], dict]:
    """The four KL diagnostics, plus a description of how they were estimated."""
    kl_seed = derive_seed(seed, 1_000_003)
    d = min(p_codes.shape[1], clip_embs.shape[1])
    report = {
        "P(true)||P(pseudo)": kl_divergence(p_codes, p_stats, "forward", method="knn", k=k, seed=kl_seed),
        "P(pseudo)||P(true)": kl_divergence(p_codes, p_stats, "reverse", method="knn", k=k, seed=kl_seed),
        "P(true)||CLIP(true)": kl_divergence(p_codes[:, :d], clip_embs[:, :d], "forward", method="knn", k=k),
        "CLIP(true)||P(true)": kl_divergence(p_codes[:, :d], clip_embs[:, :d], "reverse", method="knn", k=k),
    }
    estimator = {
        "name": "knn-two-sample",
        "k": k,
        "pseudo_draw": "seeded sample of the fitted diagonal Gaussian, same size as P(true)",
        "cross_space_dims": d,
    }
    return report, estimator


def collect_stats(generator, image_encoder, n: int = 5000, seed: int = 0,
                  domain_name: str = "", batch_size: int = 250, k: int = KNN_K) -> DomainStatsBundle:
    """Fit CLIP- and P-space Gaussians for a target domain and compute KL diagnostics."""
    if n < k + 1:
        raise InsufficientDataError(f"n={n} is too small for the k={k} nearest-neighbour estimator")
    p_codes, clip_embs = sample_domain(generator, image_encoder, n, seed, batch_size)
    clip_stats = fit_gaussian(clip_embs, SpaceTag.CLIP, domain_name)
    p_stats = fit_gaussian(p_codes, SpaceTag.P, domain_name)
    report, estimator = kl_diagnostics(p_codes, clip_embs, p_stats, k=k, seed=seed)
    return DomainStatsBundle(
        domain_name=domain_name,
        clip_stats=clip_stats,
        p_stats=p_stats,
        kl_report=report,
        n_samples=n,
        seed=seed,
        generator_fingerprint=generator.fingerprint,
        encoder_fingerprint=image_encoder.fingerprint,
        estimator=estimator,
    )


def cache_root(root=None) -> Path:
    return Path(root or os.environ.get(HOME_ENV) or ".")


def cache_path(domain_name: str, root=None) -> Path:
    return cache_root(root) / "stats" / f"{domain_name}.stats"


def _checksum(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def save_cache(bundle: DomainStatsBundle, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = bundle.to_dict()
    record = {"checksum": _checksum(payload), "payload": payload}
    path.write_text(json.dumps(record, indent=1, sort_keys=True))
    return path


def load_cache(path, generator_fingerprint: str | None = None,
               encoder_fingerprint: str | None = None,
               latent_width: int | None = None, clip_width: int | None = None) -> DomainStatsBundle:
    """Read a cache file, checking integrity and (optionally) the loaded handles."""
    path = Path(path)
    if not path.exists():
        raise MissingStatsError(
            f"no statistics cache at {path}; run `unitrans stats --domain {path.stem}` first")
    try:
        record = json.loads(path.read_text())
        payload = record["payload"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"corrupt statistics cache {path}: {exc}") from exc
    if _checksum(payload) != record.get("checksum"):
        raise FingerprintError(f"statistics cache {path} was modified after it was written")
    bundle = DomainStatsBundle.from_dict(payload)
    if generator_fingerprint is not None and generator_fingerprint != bundle.generator_fingerprint:
        raise FingerprintError(
            f"cache {path} was built with generator {bundle.generator_fingerprint}, "
            f"loaded generator is {generator_fingerprint}")
    if encoder_fingerprint is not None and encoder_fingerprint != bundle.encoder_fingerprint:
        raise FingerprintError(
            f"cache {path} was built with encoder {bundle.encoder_fingerprint}, "
            f"loaded encoder is {encoder_fingerprint}")
    if latent_width is not None and bundle.p_stats.dim != latent_width:
        raise ConfigError(f"cache P statistics have {bundle.p_stats.dim} dims, generator has {latent_width}")
    if clip_width is not None and bundle.clip_stats.dim != clip_width:
        raise ConfigError(f"cache CLIP statistics have {bundle.clip_stats.dim} dims, encoder has {clip_width}")
    return bundle


def format_kl_table(bundles) -> str:
    """Tab-separated KL table, one row per domain."""
    if isinstance(bundles, DomainStatsBundle):
        bundles = [bundles]
    lines = ["\t".join(("domain",) + KL_KEYS)]
    for b in bundles:
        lines.append("\t".join([b.domain_name] + [f"{b.kl_report[k]:.4f}" for k in KL_KEYS]))
    return "\n".join(lines)

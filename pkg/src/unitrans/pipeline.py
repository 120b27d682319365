"""File-level translation runs shared by the ``translate`` and ``batch`` commands."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import torch

from .adapters import load
from .applications import load_png, translate_degraded
from .config import RunConfig
from .domain_stats import cache_path, load_cache
from .engine import Translator
from .errors import ConfigError
from .objectives import Mask


@dataclass
class Adapters:
    generator: object
    image_encoder: object
    text_encoder: object
    extractor: object


def load_adapters(cfg: RunConfig) -> Adapters:
    keys, reg = cfg.adapters, cfg.adapters.registry
    return Adapters(
        generator=load(keys.generator, registry_path=reg),
        image_encoder=load(keys.image_encoder, role="image", registry_path=reg),
        text_encoder=load(keys.text_encoder, role="text", registry_path=reg),
        extractor=load(keys.extractor, registry_path=reg),
    )


def load_stats(domain: str, cfg: RunConfig, adapters: Adapters):
    return load_cache(cache_path(domain, cfg.stats_root),
                      generator_fingerprint=adapters.generator.fingerprint,
                      encoder_fingerprint=adapters.image_encoder.fingerprint,
                      latent_width=adapters.generator.latent_width)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_translation(record: dict, cfg: RunConfig, out_dir, adapters: Adapters | None = None) -> Path:
    """Translate one manifest-style record and write its result directory.

    ``record`` keys: ``input``, ``domain``, ``class_src``, ``class_tar`` and
    optionally ``mask``, ``seed``, ``low_res``.
    """
    for key in ("input", "domain", "class_src", "class_tar"):
        if key not in record:
            raise ConfigError(f"translation record is missing {key!r}")
    if record.get("seed") is not None:
        cfg = cfg.override(seed=int(record["seed"]))
    adapters = adapters or load_adapters(cfg)
    stats = load_stats(record["domain"], cfg, adapters)
    I_src = load_png(record["input"])
    res = adapters.generator.resolution
    low_res = bool(record.get("low_res"))
    if tuple(I_src.shape[-2:]) != (res, res) and not low_res:
        raise ConfigError(
            f"input is {I_src.shape[-1]} px but the generator renders {res} px; pass --low-res for smaller inputs")

    mask = None
    if record.get("mask"):
        mask = Mask.from_image(load_png(record["mask"]).mean(0).numpy())

    translator = Translator(adapters.generator, adapters.image_encoder, adapters.text_encoder,
                            adapters.extractor, stats, record["class_src"], record["class_tar"],
                            cfg.hyperparams)
    if mask is not None:
        result = translate_degraded(I_src, "masked", translator, mask)
    elif low_res:
        result = translate_degraded(I_src, "low_res", translator)
    else:
        result = translator.translate(I_src)

    extra = {
        "schema_version": cfg.schema_version,
        "adapters": cfg.to_dict()["adapters"],
        "input": {"path": str(record["input"]), "sha256": _sha256(record["input"])},
        "mask": {"path": str(record["mask"]), "sha256": _sha256(record["mask"])} if mask is not None else None,
        "low_res": low_res,
        "stats_cache": str(cache_path(record["domain"], cfg.stats_root)),
        "torch_version": torch.__version__,
    }
    return result.save(out_dir, extra)

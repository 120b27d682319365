"""Translate images between the latent spaces of independently trained generators."""

from .decoupling import Decoupler, build_prompt_bank
from .domain_stats import DomainStatsBundle, collect_stats, load_cache, save_cache
from .engine import Hyperparams, TranslationResult, Translator, translate
from .errors import (AdapterError, ConfigError, MissingArtifactError, MissingStatsError,
                     NumericError, UnitransError)
from .latent import GaussianStats, LatentBundle, SpaceTag, kl_divergence, p_to_w, w_to_p
from .mapper import CLIP2PMapper
from .objectives import Mask

__version__ = "0.1.0"

__all__ = [
    "AdapterError", "CLIP2PMapper", "ConfigError", "Decoupler", "DomainStatsBundle",
    "GaussianStats", "Hyperparams", "LatentBundle", "Mask", "MissingArtifactError",
    "MissingStatsError", "NumericError", "SpaceTag", "TranslationResult", "Translator",
    "UnitransError", "build_prompt_bank", "collect_stats", "kl_divergence", "load_cache",
    "p_to_w", "save_cache", "translate", "w_to_p",
]

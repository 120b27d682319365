"""Key -> adapter resolution.

Built-in toy keys need no files.  Extra keys come from a JSON registry file::

    {"ffhq-1024": {"family": "torchscript-generator", "checkpoint": "g.pt",
                   "resolution": 1024, "latent_width": 512, "n_layers": 18},
     "clip-b32":  {"family": "hf-clip", "checkpoint": "clip-vit-b32/"}}

The ``hf-clip`` family serves both ``image`` and ``text`` roles.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..errors import AdapterError, ConfigError, MissingArtifactError, UnknownKeyError
from .checkpoint import HFClipImageEncoder, HFClipTextEncoder, TorchScriptGenerator
from .toy import ToyExtractor, ToyGenerator, ToyImageEncoder, ToyTextEncoder

REGISTRY_ENV = "UNITRANS_REGISTRY"

BUILTIN = {
    "toy-generator": {"family": "toy-generator"},
    "toy-generator-2layer": {"family": "toy-generator", "n_layers": 2},
    "toy-image-encoder": {"family": "toy-image-encoder"},
    "toy-text-encoder": {"family": "toy-text-encoder"},
    "toy-extractor": {"family": "toy-extractor"},
}

# families that need no checkpoint file
_TOY_FAMILIES = {
    "toy-generator": ToyGenerator,
    "toy-image-encoder": ToyImageEncoder,
    "toy-text-encoder": ToyTextEncoder,
    "toy-extractor": ToyExtractor,
}
_OPTION_KEYS = {"latent_width", "resolution", "n_layers", "seed", "skew", "width",
                "input_resolution", "z_dim", "truncation"}


def read_registry(path=None) -> dict:
    entries = dict(BUILTIN)
    path = path or os.environ.get(REGISTRY_ENV)
    if path:
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"registry file {path} not found")
        try:
            extra = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"registry file {path} is not valid JSON: {exc}") from exc
        for key, entry in extra.items():
            if "family" not in entry:
                raise ConfigError(f"registry entry {key!r} has no family")
            if entry.get("checkpoint") and not Path(entry["checkpoint"]).is_absolute():
                entry = {**entry, "checkpoint": str(path.parent / entry["checkpoint"])}
            entries[key] = entry
    return entries


def available_keys(registry_path=None) -> list[str]:
    return sorted(read_registry(registry_path))


def capabilities(handle) -> dict:
    """Whether a handle can be shared across concurrent workers."""
    return {"reentrant": bool(getattr(handle, "reentrant", False))}


def load(key: str, checkpoint_path=None, role: str | None = None, registry_path=None):
    """Instantiate the adapter registered under ``key``.

    ``role`` picks the side of a dual-role family (``"image"`` or ``"text"``
    for ``hf-clip``).
    """
    entries = read_registry(registry_path)
    if key not in entries:
        raise UnknownKeyError(f"unknown adapter key {key!r}; available: {', '.join(sorted(entries))}")
    entry = dict(entries[key])
    family = entry.pop("family")
    checkpoint = checkpoint_path or entry.pop("checkpoint", None)
    options = {k: v for k, v in entry.items() if k in _OPTION_KEYS}

    if family in _TOY_FAMILIES:
        return _TOY_FAMILIES[family](**options)

    if checkpoint is None:
        raise ConfigError(f"adapter {key!r} ({family}) needs a checkpoint path")
    if not Path(checkpoint).exists():
        raise MissingArtifactError(f"checkpoint {checkpoint} for adapter {key!r} not found")

    if family == "torchscript-generator":
        for field in ("latent_width", "n_layers", "resolution"):
            if field not in options:
                raise ConfigError(f"registry entry {key!r} needs {field!r}")
        return TorchScriptGenerator(checkpoint, **options)
    if family == "hf-clip":
        if role == "text":
            return HFClipTextEncoder(checkpoint)
        return HFClipImageEncoder(checkpoint)
    raise AdapterError(f"adapter family {family!r} is not supported")

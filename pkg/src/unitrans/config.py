"""Run configuration: a versioned JSON file whose values CLI flags can override."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .engine import Hyperparams
from .errors import ConfigError, MissingArtifactError

SCHEMA_VERSION = 1


@dataclass
class AdapterKeys:
    generator: str = "toy-generator"
    image_encoder: str = "toy-image-encoder"
    text_encoder: str = "toy-text-encoder"
    extractor: str = "toy-extractor"
    registry: str | None = None


@dataclass
class RunConfig:
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    adapters: AdapterKeys = field(default_factory=AdapterKeys)
    stats_root: str | None = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "hyperparams": self.hyperparams.to_dict(),
            "adapters": asdict(self.adapters),
            "stats_root": self.stats_root,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"config schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
        unknown = set(d) - {"schema_version", "hyperparams", "adapters", "stats_root"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        adapter_fields = {f.name for f in fields(AdapterKeys)}
        adapters = d.get("adapters", {})
        if set(adapters) - adapter_fields:
            raise ConfigError(f"unknown adapter roles: {sorted(set(adapters) - adapter_fields)}")
        return cls(
            hyperparams=Hyperparams.from_dict(d.get("hyperparams", {})),
            adapters=AdapterKeys(**adapters),
            stats_root=d.get("stats_root"),
        )

    def override(self, **values) -> "RunConfig":
        """Copy with non-None values replaced; keys may name hyperparams or adapter roles."""
        hp = self.hyperparams.to_dict()
        ad = asdict(self.adapters)
        root = self.stats_root
        for key, value in values.items():
            if value is None:
                continue
            if key in hp:
                hp[key] = value
            elif key in ad:
                ad[key] = value
            elif key == "stats_root":
                root = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return RunConfig(Hyperparams.from_dict(hp), AdapterKeys(**ad), root)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"config file {path} not found")
    try:
        return RunConfig.from_dict(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc

"""Application configuration: one JSON file covering every default.

Each section maps onto the dataclass that consumes it. Unknown keys are
rejected loudly; a config file that silently ignores a typo would
misconfigure an expensive evaluation run.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from logcascade.errors import ConfigError
from logcascade.gateway import GatewayConfig
from logcascade.predictor import PredictorConfig
from logcascade.synth import SynthConfig
from logcascade.uncertainty import RoutingPolicy


@dataclass(slots=True)
class RetrievalConfig:
    embedder: str = "fallback"  # "fallback" or "remote"
    remote_endpoint: str = ""
    remote_dimension: int = 1024
    remote_embedder_id: str = "remote-embedder"

    def __post_init__(self) -> None:
        if self.embedder not in ("fallback", "remote"):
            raise ConfigError(f"unknown embedder kind {self.embedder!r}")
        if self.embedder == "remote" and not self.remote_endpoint:
            raise ConfigError("remote embedder needs remote_endpoint")


@dataclass(slots=True)
class QualityConfig:
    enabled: bool = False
    threshold: float = 0.95
    regenerations: int = 2
    temperature: float = 0.7

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("quality threshold must be in [0, 1]")
        if self.regenerations < 1:
            raise ConfigError("regenerations must be >= 1")


@dataclass(slots=True)
class PipelineConfig:
    policy: str = RoutingPolicy.BAYESIAN.value
    n_passes: int = 10
    seed: int = 0
    top_k: int = 5
    gateway_failure: str = "fallback"  # or "fail"
    workers: int = 1
    max_prompt_tokens: int | None = None

    def __post_init__(self) -> None:
        try:
            RoutingPolicy(self.policy)
        except ValueError:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.n_passes < 1:
            raise ConfigError("n_passes must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.gateway_failure not in ("fallback", "fail"):
            raise ConfigError("gateway_failure must be fallback or fail")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def routing_policy(self) -> RoutingPolicy:
        return RoutingPolicy(self.policy)


_SECTION_TYPES = {
    "predictor": PredictorConfig,
    "gateway": GatewayConfig,
    "retrieval": RetrievalConfig,
    "quality": QualityConfig,
    "pipeline": PipelineConfig,
    "synth": SynthConfig,
}

# dataclass fields that JSON represents as lists but the code wants as tuples
_TUPLE_FIELDS = {"ngram_sizes", "split_ratios"}


def _build_section(cls, data: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    coerced = {
        k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
        for k, v in data.items()
    }
    return cls(**coerced)


@dataclass(slots=True)
class AppConfig:
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    quality: QualityConfig = field(default_factory=QualityConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_dict(self) -> dict:
        out = {}
        for section in _SECTION_TYPES:
            value = dataclasses.asdict(getattr(self, section))
            out[section] = {
                k: list(v) if isinstance(v, tuple) else v for k, v in value.items()
            }
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def from_dict(cls, data: dict) -> "AppConfig":
        unknown = set(data) - set(_SECTION_TYPES)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for section, section_cls in _SECTION_TYPES.items():
            raw = data.get(section, {})
            if not isinstance(raw, dict):
                raise ConfigError(f"section [{section}] must be an object")
            kwargs[section] = _build_section(section_cls, raw, section)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "AppConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

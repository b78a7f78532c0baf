"""Synthetic log corpus for desk-scale experiments.

Generates templated pseudo-log lines whose class is carried by
class-indicative marker tokens. A configurable fraction of samples is
ambiguous: their markers are drawn from a mixture of the true class and
the others, which pushes the small model toward low-margin predictions
and gives the cascade something real to route.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from logcascade.errors import ConfigError
from logcascade.tasks import (
    DatasetSplit,
    LabeledSample,
    TaskKind,
    TaskSpec,
    chronological_split,
)

DEFAULT_TEMPLATES = [
    "{svc} {level} {body} code {code}",
    "{level} {svc} {body} at offset {code}",
    "{svc} {body} {level} retry {code}",
]

_SERVICES = ["authsvc", "storaged", "netagent", "scheduler", "apigw"]
_LEVELS = ["INFO", "WARN", "ERROR", "DEBUG"]
_COMMON = [
    "request", "worker", "queue", "session", "buffer", "thread",
    "handler", "socket", "timeout", "cache", "shard", "replica",
]
_MARKERS_PER_CLASS = 6
_BODY_TOKENS = 8


@dataclass(slots=True)
class SynthConfig:
    n_samples: int = 1000
    n_classes: int = 2
    template_bank: list[str] = field(default_factory=lambda: list(DEFAULT_TEMPLATES))
    noise_rate: float = 0.15
    separability: float = 0.9
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def __post_init__(self) -> None:
        if self.n_samples < 3:
            raise ConfigError("need at least 3 samples to split")
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ConfigError("noise_rate must be in [0, 1]")
        if not 0.0 < self.separability <= 1.0:
            raise ConfigError("separability must be in (0, 1]")
        if not self.template_bank:
            raise ConfigError("template bank must be non-empty")


def class_labels(n_classes: int) -> list[str]:
    return [f"Class{c}" for c in range(n_classes)]


def class_markers(n_classes: int) -> list[list[str]]:
    return [
        [f"sig{c}tok{j}" for j in range(_MARKERS_PER_CLASS)] for c in range(n_classes)
    ]


def synthetic_task_spec(config: SynthConfig) -> TaskSpec:
    return TaskSpec(
        task_id=f"synthetic-{config.n_classes}c",
        kind=TaskKind.MULTI_CLASS,
        label_space=class_labels(config.n_classes),
        metric_set=["accuracy", "precision", "recall", "f1", "weighted_f1"],
        prompt_task_description=(
            "Classify the synthetic service log line into its event category."
        ),
        prompt_requirement="Judge only from the tokens in the line.",
        positive_label=class_labels(config.n_classes)[-1],
    )


def _body_tokens(
    rng: np.random.Generator,
    own: list[str],
    others: list[str],
    separability: float,
    ambiguous: bool,
) -> list[str]:
    tokens = []
    if ambiguous:
        # near-even own/other marker mix: low-margin on purpose
        own_share = rng.uniform(0.35, 0.65)
        for _ in range(_BODY_TOKENS):
            r = rng.random()
            if r < own_share:
                tokens.append(own[rng.integers(len(own))])
            else:
                tokens.append(others[rng.integers(len(others))])
    else:
        for _ in range(_BODY_TOKENS):
            if rng.random() < separability:
                tokens.append(own[rng.integers(len(own))])
            else:
                tokens.append(_COMMON[rng.integers(len(_COMMON))])
    return tokens


def synthesize_corpus(config: SynthConfig) -> DatasetSplit:
    """Deterministic templated corpus, split chronologically.

    Classes rotate round-robin so every split holds every class. Each
    sample records whether it was generated ambiguous in its id suffix,
    purely as a debugging aid; nothing downstream reads it.
    """
    rng = np.random.default_rng(config.seed)
    labels = class_labels(config.n_classes)
    markers = class_markers(config.n_classes)
    samples = []
    for i in range(config.n_samples):
        c = i % config.n_classes
        others = [tok for k, group in enumerate(markers) if k != c for tok in group]
        ambiguous = bool(rng.random() < config.noise_rate)
        body = " ".join(
            _body_tokens(rng, markers[c], others, config.separability, ambiguous)
        )
        template = config.template_bank[int(rng.integers(len(config.template_bank)))]
        text = template.format(
            svc=_SERVICES[int(rng.integers(len(_SERVICES)))],
            level=_LEVELS[int(rng.integers(len(_LEVELS)))],
            body=body,
            code=int(rng.integers(100, 600)),
        )
        suffix = "a" if ambiguous else "c"
        samples.append(
            LabeledSample(
                sample_id=f"syn-{i}-{suffix}",
                input_text=text,
                label=labels[c],
                timestamp_order=i,
            )
        )
    return chronological_split(samples, ratios=config.split_ratios)

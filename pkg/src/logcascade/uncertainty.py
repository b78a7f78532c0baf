"""Uncertainty scoring and routing.

The small model's validation error rate acts as a prior belief that any
given prediction is wrong. N perturbed passes then update that belief:
each pass whose probability strays beyond the calibrated variation of
known-correct samples counts as evidence of uncertainty. The posterior
expectation has the closed form (err + alpha) / (N + 1), and an input is
escalated to the large model only when it exceeds 1/2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

from logcascade.errors import (
    CalibrationContamination,
    ConfigError,
    EmptyValidation,
    InvalidObservationCount,
    OracleUnavailable,
)
from logcascade.hashing import derive_seed

if TYPE_CHECKING:
    from logcascade.predictor import PassSeries, PredictorModel
    from logcascade.tasks import LabeledSample

CALIBRATION_VERSION = "calibration-v1"


@dataclass(slots=True)
class Calibration:
    """Validation-time quantities shared by every routing decision."""

    error_rate: float
    variation: float
    n_passes: int
    n_correct_samples: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.error_rate <= 1.0:
            raise ConfigError(f"error_rate out of range: {self.error_rate}")
        if self.variation < 0.0:
            raise ConfigError(f"variation must be >= 0, got {self.variation}")
        if self.n_passes < 1:
            raise ConfigError(f"n_passes must be >= 1, got {self.n_passes}")

    def save(self, path: str | Path) -> None:
        payload = {
            "version": CALIBRATION_VERSION,
            "err": self.error_rate,
            "variation": self.variation,
            "n_passes": self.n_passes,
            "n_correct_samples": self.n_correct_samples,
        }
        Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Calibration":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != CALIBRATION_VERSION:
            raise ConfigError(f"unsupported calibration version {payload.get('version')!r}")
        return cls(
            error_rate=payload["err"],
            variation=payload["variation"],
            n_passes=payload["n_passes"],
            n_correct_samples=payload["n_correct_samples"],
        )


@dataclass(slots=True)
class UncertaintyEstimate:
    """Posterior belief that one prediction is wrong."""

    uncertain_count: int
    n_passes: int
    error_rate: float
    posterior_alpha: float
    posterior_beta: float
    p_uncertain: float
    p_certain: float
    observations: list[float] = field(default_factory=list)


class RoutingPolicy(str, Enum):
    BAYESIAN = "bayesian"
    PRIOR_ONLY = "prior-only"
    ALWAYS_LLM = "always-llm"
    NEVER_LLM = "never-llm"
    ORACLE = "oracle"
    # Placeholder for a learned router; selecting it raises.
    CLASSIFIER = "classifier"


@dataclass(slots=True)
class RoutingDecision:
    route_to_llm: bool
    policy: RoutingPolicy
    p_uncertain: float


def compute_error_rate(predictions: list, labels: list) -> float:
    """Fraction of validation predictions that miss their label."""
    if not predictions or not labels:
        raise EmptyValidation("empty validation set")
    if len(predictions) != len(labels):
        raise ConfigError(
            f"{len(predictions)} predictions vs {len(labels)} labels"
        )
    wrong = sum(p != y for p, y in zip(predictions, labels))
    return wrong / len(labels)


def pass_deviations(pass_probabilities: list[float]) -> list[float]:
    """Absolute deviation of each pass from the mean of its own series."""
    if not pass_probabilities:
        raise ConfigError("no pass probabilities")
    first = pass_probabilities[0]
    if all(p == first for p in pass_probabilities):
        # A constant series deviates by exactly zero; don't let the mean's
        # rounding error manufacture jitter that would count as uncertainty.
        return [0.0] * len(pass_probabilities)
    mean = math.fsum(pass_probabilities) / len(pass_probabilities)
    return [abs(p - mean) for p in pass_probabilities]


def variation_from_pass_sets(pass_sets: list[list[float]]) -> float:
    """Average per-sample mean absolute deviation across samples."""
    if not pass_sets:
        raise EmptyValidation("no pass sets to calibrate from")
    per_sample = []
    for passes in pass_sets:
        devs = pass_deviations(passes)
        per_sample.append(sum(devs) / len(devs))
    return sum(per_sample) / len(per_sample)


def calibrate_variation(
    model: PredictorModel,
    correct_samples: list[LabeledSample],
    n_passes: int,
    seed: int,
    error_rate: float,
) -> Calibration:
    """Measure how much pass probabilities wobble on known-good inputs.

    Every sample must be one the deterministic model already gets right;
    a contaminated list would inflate the envelope and suppress routing.
    """
    if not correct_samples:
        raise EmptyValidation("no correct samples to calibrate from")
    pass_sets = []
    for s in correct_samples:
        pred = model.predict(s.input_text, candidates=s.candidates) if model.ranking \
            else model.predict(s.input_text)
        expected = str(s.label + 1) if model.ranking else str(s.label)
        if pred.label != expected:
            raise CalibrationContamination(
                f"sample {s.sample_id} predicted {pred.label!r}, labeled {expected!r}"
            )
        series = model.stochastic_passes(
            s.input_text,
            pred.label,
            n_passes,
            derive_seed(seed, "sample", s.sample_id),
            candidates=s.candidates if model.ranking else None,
        )
        pass_sets.append(series.pass_probabilities)
    return Calibration(
        error_rate=error_rate,
        variation=variation_from_pass_sets(pass_sets),
        n_passes=n_passes,
        n_correct_samples=len(correct_samples),
    )


def count_uncertain(passes: PassSeries, variation: float) -> int:
    """Number of passes whose deviation exceeds the calibrated envelope.

    A deviation strictly larger than the variation observed on correct
    samples is abnormal; deviations inside the envelope are the model's
    normal jitter and do not count.
    """
    if variation < 0.0:
        raise ConfigError(f"variation must be >= 0, got {variation}")
    return sum(d > variation for d in pass_deviations(passes.pass_probabilities))


def estimate_uncertainty(
    err: float,
    n_passes: int,
    uncertain_count: int,
    observations: list[float] | None = None,
) -> UncertaintyEstimate:
    """Posterior probability that the prediction is wrong.

    Expectation of a Beta(err + alpha, (1 - err) + N - alpha) posterior,
    which collapses to (err + alpha) / (N + 1).
    """
    if not 0.0 <= err <= 1.0:
        raise ConfigError(f"err out of range: {err}")
    if n_passes < 1:
        raise ConfigError(f"n_passes must be >= 1, got {n_passes}")
    if not 0 <= uncertain_count <= n_passes:
        raise InvalidObservationCount(
            f"uncertain_count {uncertain_count} outside [0, {n_passes}]"
        )
    p_uncertain = (err + uncertain_count) / (n_passes + 1)
    return UncertaintyEstimate(
        uncertain_count=uncertain_count,
        n_passes=n_passes,
        error_rate=err,
        posterior_alpha=err + uncertain_count,
        posterior_beta=(1.0 - err) + n_passes - uncertain_count,
        p_uncertain=p_uncertain,
        p_certain=1.0 - p_uncertain,
        observations=list(observations) if observations is not None else [],
    )


def estimate_from_passes(
    calibration: Calibration,
    passes: PassSeries,
) -> UncertaintyEstimate:
    """Full per-input path: deviations, threshold count, posterior."""
    alpha = count_uncertain(passes, calibration.variation)
    return estimate_uncertainty(
        calibration.error_rate,
        passes.n_passes,
        alpha,
        observations=pass_deviations(passes.pass_probabilities),
    )


def decide_route(
    estimate: UncertaintyEstimate,
    policy: RoutingPolicy,
    calibration: Calibration,
    slm_correct: bool | None = None,
) -> RoutingDecision:
    """Choose whether this input escalates to the large model.

    bayesian routes iff p_uncertain > 0.5 (ties stay local); prior-only
    ignores the passes and routes every input iff the validation error
    rate alone exceeds 0.5; oracle is a test-only upper bound that routes
    exactly the inputs the small model got wrong.
    """
    if policy == RoutingPolicy.BAYESIAN:
        route = estimate.p_uncertain > 0.5
    elif policy == RoutingPolicy.PRIOR_ONLY:
        route = calibration.error_rate > 0.5
    elif policy == RoutingPolicy.ALWAYS_LLM:
        route = True
    elif policy == RoutingPolicy.NEVER_LLM:
        route = False
    elif policy == RoutingPolicy.ORACLE:
        if slm_correct is None:
            raise OracleUnavailable("oracle policy needs ground truth for every input")
        route = not slm_correct
    elif policy == RoutingPolicy.CLASSIFIER:
        raise NotImplementedError("learned routing classifier is not implemented")
    else:  # pragma: no cover - enum is closed
        raise ConfigError(f"unknown policy {policy!r}")
    return RoutingDecision(route_to_llm=route, policy=policy, p_uncertain=estimate.p_uncertain)

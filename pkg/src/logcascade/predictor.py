"""Small-model abstraction and a self-contained reference classifier.

The cascade only needs two behaviors from its small model: a
deterministic prediction, and N stochastic passes that report how the
probability of that prediction wobbles under perturbation. Any object
honoring that contract can stand in; the reference here is a hashed
word-n-gram linear model with multiplicative feature dropout applied at
inference time only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from logcascade.errors import (
    ConfigError,
    DegenerateLabels,
    EmptyDataset,
    EmptyInput,
    ModelNotTrained,
)
from logcascade.hashing import derive_seed, stable_hash64
from logcascade.tasks import LabeledSample, TaskKind, TaskSpec

MODEL_VERSION = "slm-linear-v1"

MATCH = "__match__"
MISMATCH = "__mismatch__"
_RANK_PAIR_SEP = "\n### candidate\n"


@dataclass(slots=True)
class Prediction:
    """Deterministic output of the small model on one input."""

    label: str
    class_probabilities: dict[str, float]
    top_probability: float


@dataclass(slots=True)
class PassSeries:
    """Probability of the predicted class across N perturbed passes."""

    pass_probabilities: list[float]
    pass_seeds: list[int]
    n_passes: int


class PassProvider(Protocol):
    """Anything that can predict and then re-score under perturbation."""

    def predict(self, input_text: str, candidates: list[str] | None = None) -> Prediction: ...

    def stochastic_passes(
        self,
        input_text: str,
        predicted_label: str,
        n_passes: int,
        seed: int,
        candidates: list[str] | None = None,
    ) -> PassSeries: ...


@dataclass(slots=True)
class PredictorConfig:
    feature_dimension: int = 4096
    epochs: int = 60
    learning_rate: float = 2.0
    dropout_rate: float = 0.1
    seed: int = 0
    ngram_sizes: tuple[int, ...] = (1, 2)

    def __post_init__(self) -> None:
        if self.feature_dimension <= 0:
            raise ConfigError("feature_dimension must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


def _tokenize(text: str) -> list[str]:
    return text.lower().split()


def featurize(
    text: str,
    feature_dimension: int,
    ngram_sizes: tuple[int, ...],
) -> np.ndarray:
    """Hash word n-grams into a fixed-width TF vector, L2-normalized."""
    tokens = _tokenize(text)
    if not tokens:
        raise EmptyInput("input has no tokens")
    vec = np.zeros(feature_dimension, dtype=np.float64)
    for n in ngram_sizes:
        for i in range(len(tokens) - n + 1):
            gram = " ".join(tokens[i : i + n])
            vec[stable_hash64(gram, namespace="feat") % feature_dimension] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(slots=True)
class PredictorModel:
    """Linear classifier over hashed n-gram features.

    ``ranking`` models are trained as binary match/mismatch scorers over
    (input, candidate) pair texts; at prediction time the per-candidate
    match probabilities are renormalized into a distribution over
    1-based candidate positions.
    """

    feature_dimension: int
    ngram_sizes: tuple[int, ...]
    dropout_rate: float
    label_space: list[str]
    weights: np.ndarray
    ranking: bool = False
    training_seed: int = 0
    version: str = MODEL_VERSION

    def _features(self, text: str) -> np.ndarray:
        return featurize(text, self.feature_dimension, self.ngram_sizes)

    def _class_probs(self, x: np.ndarray) -> np.ndarray:
        return _softmax_rows(self.weights @ x)

    def _pair_features(self, input_text: str, candidates: list[str]) -> np.ndarray:
        return np.stack([
            self._features(input_text + _RANK_PAIR_SEP + c) for c in candidates
        ])

    def _candidate_distribution(self, pair_x: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
        if mask is not None:
            pair_x = pair_x * mask
        probs = _softmax_rows(pair_x @ self.weights.T)
        match_col = self.label_space.index(MATCH)
        scores = probs[:, match_col]
        total = scores.sum()
        if total <= 0.0:  # all-zero only if every softmax output degenerates
            return np.full(len(scores), 1.0 / len(scores))
        return scores / total

    def predict(self, input_text: str, candidates: list[str] | None = None) -> Prediction:
        """Deterministic prediction; dropout is never applied here."""
        if self.ranking:
            if not candidates:
                raise ConfigError("ranking model needs a candidate list")
            dist = self._candidate_distribution(self._pair_features(input_text, candidates), None)
            labels = [str(i + 1) for i in range(len(candidates))]
        else:
            if candidates is not None:
                raise ConfigError("candidates passed to a non-ranking model")
            dist = self._class_probs(self._features(input_text))
            labels = self.label_space
        idx = int(np.argmax(dist))  # first max wins: label-order tie-break
        return Prediction(
            label=labels[idx],
            class_probabilities={lab: float(p) for lab, p in zip(labels, dist)},
            top_probability=float(dist[idx]),
        )

    def _dropout_mask(self, rng: np.random.Generator) -> np.ndarray:
        # Inverted scaling keeps the expected feature vector unchanged.
        keep = 1.0 - self.dropout_rate
        return (rng.random(self.feature_dimension) >= self.dropout_rate) / keep

    def stochastic_passes(
        self,
        input_text: str,
        predicted_label: str,
        n_passes: int,
        seed: int,
        candidates: list[str] | None = None,
    ) -> PassSeries:
        """Re-score the predicted label under N independent dropout masks.

        The mask for pass n is a pure function of (seed, n), so reruns and
        reordering reproduce exactly. With dropout_rate 0 every pass equals
        the deterministic probability.
        """
        if n_passes < 1:
            raise ConfigError(f"n_passes must be >= 1, got {n_passes}")
        if self.ranking:
            if not candidates:
                raise ConfigError("ranking model needs a candidate list")
            pair_x = self._pair_features(input_text, candidates)
            target = int(predicted_label) - 1
            if not 0 <= target < len(candidates):
                raise ConfigError(f"predicted candidate {predicted_label!r} out of range")
        else:
            x = self._features(input_text)
            if predicted_label not in self.label_space:
                raise ConfigError(f"unknown label {predicted_label!r}")
            target = self.label_space.index(predicted_label)
        probabilities = []
        pass_seeds = []
        for n in range(n_passes):
            pass_seed = derive_seed(seed, "pass", n)
            pass_seeds.append(pass_seed)
            if self.dropout_rate == 0.0:
                mask = None
            else:
                mask = self._dropout_mask(np.random.default_rng(pass_seed))
            if self.ranking:
                dist = self._candidate_distribution(pair_x, mask)
            else:
                xi = x if mask is None else x * mask
                dist = self._class_probs(xi)
            probabilities.append(float(dist[target]))
        return PassSeries(
            pass_probabilities=probabilities,
            pass_seeds=pass_seeds,
            n_passes=n_passes,
        )

    # --- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {
            "version": self.version,
            "feature_dimension": self.feature_dimension,
            "ngram_sizes": list(self.ngram_sizes),
            "dropout_rate": self.dropout_rate,
            "label_space": list(self.label_space),
            "ranking": self.ranking,
            "training_seed": self.training_seed,
            "weights": self.weights.tolist(),
        }
        Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PredictorModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        version = payload.get("version")
        if version != MODEL_VERSION:
            raise ModelNotTrained(f"unsupported model version {version!r}")
        return cls(
            feature_dimension=payload["feature_dimension"],
            ngram_sizes=tuple(payload["ngram_sizes"]),
            dropout_rate=payload["dropout_rate"],
            label_space=list(payload["label_space"]),
            weights=np.asarray(payload["weights"], dtype=np.float64),
            ranking=payload["ranking"],
            training_seed=payload["training_seed"],
            version=version,
        )


def _cross_entropy(weights: np.ndarray, X: np.ndarray, Y: np.ndarray) -> float:
    probs = _softmax_rows(X @ weights.T)
    eps = 1e-12
    return float(-(Y * np.log(probs + eps)).sum() / X.shape[0])


def _pairwise_training_rows(train: list[LabeledSample]) -> list[tuple[str, str]]:
    rows = []
    for s in train:
        if s.candidates is None:
            raise ConfigError(f"ranking sample {s.sample_id} has no candidates")
        for i, cand in enumerate(s.candidates):
            rows.append((
                s.input_text + _RANK_PAIR_SEP + cand,
                MATCH if i == s.label else MISMATCH,
            ))
    return rows


def train_reference(
    train: list[LabeledSample],
    config: PredictorConfig,
    task: TaskSpec,
) -> PredictorModel:
    """Fit the reference linear model by full-batch gradient descent.

    Weights start at zero, so zero epochs yields uniform probabilities
    everywhere. Each epoch backtracks (halving the step) until the
    cross-entropy does not increase, which makes the loss curve monotone
    by construction.
    """
    if not train:
        raise EmptyDataset("empty training set")
    if task.kind == TaskKind.RANKING:
        rows = _pairwise_training_rows(train)
        label_space = [MATCH, MISMATCH]
        ranking = True
    else:
        for s in train:
            if s.label not in task.label_space:
                raise ConfigError(
                    f"sample {s.sample_id}: label {s.label!r} not in task label space"
                )
        rows = [(s.input_text, str(s.label)) for s in train]
        label_space = list(task.label_space)
        ranking = False
    if len({lab for _, lab in rows}) < 2:
        raise DegenerateLabels("training set contains a single class")

    X = np.stack([
        featurize(text, config.feature_dimension, config.ngram_sizes) for text, _ in rows
    ])
    Y = np.zeros((len(rows), len(label_space)), dtype=np.float64)
    for r, (_, lab) in enumerate(rows):
        Y[r, label_space.index(lab)] = 1.0

    weights = np.zeros((len(label_space), config.feature_dimension), dtype=np.float64)
    lr = config.learning_rate
    loss = _cross_entropy(weights, X, Y)
    for _ in range(config.epochs):
        probs = _softmax_rows(X @ weights.T)
        grad = (probs - Y).T @ X / X.shape[0]
        while lr > 1e-12:
            candidate = weights - lr * grad
            new_loss = _cross_entropy(candidate, X, Y)
            if new_loss <= loss:
                weights, loss = candidate, new_loss
                break
            lr *= 0.5
        else:
            break  # step underflow: converged as far as float64 allows

    return PredictorModel(
        feature_dimension=config.feature_dimension,
        ngram_sizes=config.ngram_sizes,
        dropout_rate=config.dropout_rate,
        label_space=label_space,
        weights=weights,
        ranking=ranking,
        training_seed=config.seed,
    )


@dataclass(slots=True)
class RemotePredictor:
    """Thin client for an external pass provider.

    Wire contract: POST {text, label, n_passes, seed} and read back
    {pass_probabilities: [float]}. The transport is injected so tests can
    run hermetically.
    """

    post: Callable[[dict], dict]
    label_space: list[str] = field(default_factory=list)

    def predict(self, input_text: str, candidates: list[str] | None = None) -> Prediction:
        raise NotImplementedError(
            "remote providers only serve stochastic passes; pair with a local predict"
        )

    def stochastic_passes(
        self,
        input_text: str,
        predicted_label: str,
        n_passes: int,
        seed: int,
        candidates: list[str] | None = None,
    ) -> PassSeries:
        body = {"text": input_text, "label": predicted_label, "n_passes": n_passes, "seed": seed}
        reply = self.post(body)
        probs = [float(p) for p in reply["pass_probabilities"]]
        if len(probs) != n_passes:
            raise ConfigError(
                f"remote returned {len(probs)} pass probabilities, expected {n_passes}"
            )
        return PassSeries(
            pass_probabilities=probs,
            pass_seeds=[derive_seed(seed, "pass", n) for n in range(n_passes)],
            n_passes=n_passes,
        )

"""Task definitions and dataset construction.

Covers the four input shapes the pipeline understands: windowed log
sequences, log/description matching pairs, cause-ranking candidate sets,
and plain multi-class records, plus leakage-safe chronological splitting
and JSON Lines persistence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from logcascade.errors import (
    CannotFormNegative,
    ConfigError,
    DegenerateSplit,
    EmptyDataset,
    InsufficientDistractors,
)

NORMAL_LABEL = "Normal"
ANOMALY_LABEL = "Anomaly"
MATCH_LABEL = "Match"
MISMATCH_LABEL = "Mismatch"


class TaskKind(str, Enum):
    SEQUENCE_CLASSIFICATION = "sequence-classification"
    PAIR_MATCHING = "pair-matching"
    RANKING = "ranking"
    MULTI_CLASS = "multi-class"


@dataclass(slots=True)
class TaskSpec:
    """A log-analysis task: its label space, metrics, and prompt wording.

    ``prompt_task_description`` and ``prompt_requirement`` are free text
    rendered into every prompt; operators edit them in the task file
    without touching code. ``positive_label`` names the class that
    precision/recall/F1 report on (defaults to the last label).
    """

    task_id: str
    kind: TaskKind
    label_space: list[str]
    metric_set: list[str]
    prompt_task_description: str
    prompt_requirement: str
    candidate_count: int | None = None
    positive_label: str | None = None

    def __post_init__(self) -> None:
        if not self.label_space:
            raise ConfigError(f"task {self.task_id!r}: empty label space")
        if len(set(self.label_space)) != len(self.label_space):
            raise ConfigError(f"task {self.task_id!r}: duplicate labels")
        if self.kind == TaskKind.RANKING:
            if self.candidate_count is None or self.candidate_count < 2:
                raise ConfigError(
                    f"task {self.task_id!r}: ranking needs candidate_count >= 2"
                )
        if self.positive_label is not None and self.positive_label not in self.label_space:
            raise ConfigError(
                f"task {self.task_id!r}: positive_label not in label space"
            )

    @property
    def effective_positive_label(self) -> str:
        return self.positive_label if self.positive_label is not None else self.label_space[-1]

    def to_dict(self) -> dict:
        d = {
            "task_id": self.task_id,
            "kind": self.kind.value,
            "label_space": list(self.label_space),
            "metric_set": list(self.metric_set),
            "prompt_task_description": self.prompt_task_description,
            "prompt_requirement": self.prompt_requirement,
        }
        if self.candidate_count is not None:
            d["candidate_count"] = self.candidate_count
        if self.positive_label is not None:
            d["positive_label"] = self.positive_label
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        try:
            return cls(
                task_id=d["task_id"],
                kind=TaskKind(d["kind"]),
                label_space=list(d["label_space"]),
                metric_set=list(d["metric_set"]),
                prompt_task_description=d["prompt_task_description"],
                prompt_requirement=d["prompt_requirement"],
                candidate_count=d.get("candidate_count"),
                positive_label=d.get("positive_label"),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad task file: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TaskSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(slots=True)
class LabeledSample:
    """One input with ground truth.

    ``label`` is a label string, or a 0-based candidate index for ranking
    samples. ``timestamp_order`` is the rank used for chronological
    splitting.
    """

    sample_id: str
    input_text: str
    label: str | int
    timestamp_order: int
    candidates: list[str] | None = None

    def to_dict(self) -> dict:
        d: dict = {"id": self.sample_id, "text": self.input_text}
        if self.candidates is not None:
            d["candidates"] = list(self.candidates)
        d["label"] = self.label
        d["order"] = self.timestamp_order
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledSample":
        return cls(
            sample_id=str(d["id"]),
            input_text=d["text"],
            label=d["label"],
            timestamp_order=int(d["order"]),
            candidates=list(d["candidates"]) if d.get("candidates") is not None else None,
        )


@dataclass(slots=True)
class DatasetSplit:
    train: list[LabeledSample] = field(default_factory=list)
    validation: list[LabeledSample] = field(default_factory=list)
    test: list[LabeledSample] = field(default_factory=list)

    def all_samples(self) -> list[LabeledSample]:
        return [*self.train, *self.validation, *self.test]


def pair_text(log: str, description: str) -> str:
    """Canonical single-text rendering of a (log, description) pair."""
    return f"{log}\n{description}"


def window_logs(
    raw_logs: list[str],
    window_size: int,
    labels: list[int] | list[bool],
) -> list[LabeledSample]:
    """Group chronologically ordered log lines into fixed, non-overlapping
    windows.

    A window is labeled anomalous iff any line inside it is flagged; a
    trailing partial window is dropped. Window text is the newline
    concatenation of its lines.
    """
    if not raw_logs:
        raise EmptyDataset("no log lines to window")
    if window_size < 1:
        raise ConfigError(f"window_size must be >= 1, got {window_size}")
    if len(labels) != len(raw_logs):
        raise ConfigError(
            f"{len(raw_logs)} log lines but {len(labels)} labels"
        )
    samples = []
    n_windows = len(raw_logs) // window_size
    for w in range(n_windows):
        lo = w * window_size
        hi = lo + window_size
        anomalous = any(bool(v) for v in labels[lo:hi])
        samples.append(
            LabeledSample(
                sample_id=f"win-{w}",
                input_text="\n".join(raw_logs[lo:hi]),
                label=ANOMALY_LABEL if anomalous else NORMAL_LABEL,
                timestamp_order=w,
            )
        )
    return samples


def make_matching_pairs(
    entries: list[tuple[str, str]],
    seed: int,
) -> list[LabeledSample]:
    """Build a balanced matching dataset from (log, description) entries.

    Each entry yields one positive pair (its own description) and one
    negative pair whose description is drawn uniformly from a *different*
    entry. Only the entry identity is excluded, so two entries that happen
    to share description text can still collide.
    """
    if len(entries) < 2:
        raise CannotFormNegative("need at least 2 entries to draw a negative description")
    rng = np.random.default_rng(seed)
    samples = []
    n = len(entries)
    for i, (log, desc) in enumerate(entries):
        samples.append(
            LabeledSample(
                sample_id=f"pair-{i}-pos",
                input_text=pair_text(log, desc),
                label=MATCH_LABEL,
                timestamp_order=2 * i,
            )
        )
        j = int(rng.integers(0, n - 1))
        if j >= i:
            j += 1
        samples.append(
            LabeledSample(
                sample_id=f"pair-{i}-neg",
                input_text=pair_text(log, entries[j][1]),
                label=MISMATCH_LABEL,
                timestamp_order=2 * i + 1,
            )
        )
    return samples


def make_ranking_candidates(
    entries: list[tuple[str, str]],
    n_distractors: int = 4,
    seed: int = 0,
) -> list[LabeledSample]:
    """Build a cause-ranking dataset from (log, cause) entries.

    Each sample's candidate set holds the entry's true cause plus
    ``n_distractors`` distinct cause texts drawn from other entries,
    shuffled deterministically; the label is the true cause's index.
    """
    if len(entries) < n_distractors + 1:
        raise InsufficientDistractors(
            f"need at least {n_distractors + 1} entries, got {len(entries)}"
        )
    rng = np.random.default_rng(seed)
    samples = []
    for i, (log, cause) in enumerate(entries):
        # Distinct cause texts from other entries; dedup keeps first occurrence
        # so the pool order (and hence the draw) is stable.
        pool = list(dict.fromkeys(
            c for j, (_, c) in enumerate(entries) if j != i and c != cause
        ))
        if len(pool) < n_distractors:
            raise InsufficientDistractors(
                f"entry {i}: only {len(pool)} distinct distractor causes available"
            )
        picks = rng.choice(len(pool), size=n_distractors, replace=False)
        candidates = [cause] + [pool[int(p)] for p in picks]
        order = rng.permutation(len(candidates))
        candidates = [candidates[int(o)] for o in order]
        samples.append(
            LabeledSample(
                sample_id=f"rank-{i}",
                input_text=log,
                label=candidates.index(cause),
                timestamp_order=i,
                candidates=candidates,
            )
        )
    return samples


def chronological_split(
    samples: list[LabeledSample],
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
) -> DatasetSplit:
    """Order-preserving contiguous partition by ``timestamp_order``.

    Train takes the earliest samples, test the latest, so no test sample
    predates a training one.
    """
    if not samples:
        raise EmptyDataset("nothing to split")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    ordered = sorted(samples, key=lambda s: s.timestamp_order)
    n = len(ordered)
    c1 = int(round(n * ratios[0]))
    c2 = int(round(n * (ratios[0] + ratios[1])))
    split = DatasetSplit(
        train=ordered[:c1],
        validation=ordered[c1:c2],
        test=ordered[c2:],
    )
    for name, part in (("train", split.train), ("validation", split.validation), ("test", split.test)):
        if not part:
            raise DegenerateSplit(f"{name} split is empty for n={n}, ratios={ratios}")
    return split


# --- persistence --------------------------------------------------------------

def save_samples(samples: list[LabeledSample], path: str | Path) -> None:
    """Write samples as JSON Lines, one record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")


def load_samples(path: str | Path) -> list[LabeledSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(LabeledSample.from_dict(json.loads(line)))
    if not samples:
        raise EmptyDataset(f"no samples in {path}")
    return samples


def load_raw_logs(
    log_path: str | Path,
    label_path: str | Path | None = None,
) -> tuple[list[str], list[int]]:
    """Read a plain-text log file (one line per log) and an optional
    parallel label file of 0/1 flags. Missing label file means all-normal.
    """
    lines = Path(log_path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise EmptyDataset(f"no log lines in {log_path}")
    if label_path is None:
        return lines, [0] * len(lines)
    flags = [int(v) for v in Path(label_path).read_text(encoding="utf-8").split()]
    if len(flags) != len(lines):
        raise ConfigError(
            f"{len(lines)} log lines but {len(flags)} label flags"
        )
    return lines, flags

"""Evaluation metrics: classification, matching, and ranking.

Zero-denominator cases never crash an evaluation run; the affected
metric reports 0 and the degenerate condition is listed in the report's
flags so it cannot pass for a real score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from logcascade.errors import ConfigError, EmptyDataset
from logcascade.tasks import TaskSpec


@dataclass(slots=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    tp: int
    fp: int
    fn: int


@dataclass(slots=True)
class MetricReport:
    values: dict[str, float]
    per_class: dict[str, ClassMetrics]
    degenerate_flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "values": dict(self.values),
            "per_class": {
                lab: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "tp": m.tp,
                    "fp": m.fp,
                    "fn": m.fn,
                }
                for lab, m in self.per_class.items()
            },
            "degenerate_flags": list(self.degenerate_flags),
        }


def accuracy(predictions: list[str], labels: list[str]) -> float:
    if not labels:
        raise EmptyDataset("no labels to score")
    return sum(p == y for p, y in zip(predictions, labels)) / len(labels)


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float, list[str]]:
    """Standard P/R/F1 from counts; zero denominators score 0 and flag."""
    flags = []
    if tp + fp == 0:
        precision, flag_p = 0.0, True
    else:
        precision, flag_p = tp / (tp + fp), False
    if tp + fn == 0:
        recall, flag_r = 0.0, True
    else:
        recall, flag_r = tp / (tp + fn), False
    if flag_p:
        flags.append("precision:zero-denominator")
    if flag_r:
        flags.append("recall:zero-denominator")
    if precision + recall == 0.0:
        f1 = 0.0
        flags.append("f1:zero-denominator")
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1, flags


def per_class_metrics(
    predictions: list[str],
    labels: list[str],
    label_space: list[str],
) -> tuple[dict[str, ClassMetrics], list[str]]:
    if len(predictions) != len(labels):
        raise ConfigError(f"{len(predictions)} predictions vs {len(labels)} labels")
    out: dict[str, ClassMetrics] = {}
    flags: list[str] = []
    for lab in label_space:
        tp = sum(p == lab and y == lab for p, y in zip(predictions, labels))
        fp = sum(p == lab and y != lab for p, y in zip(predictions, labels))
        fn = sum(p != lab and y == lab for p, y in zip(predictions, labels))
        precision, recall, f1, class_flags = precision_recall_f1(tp, fp, fn)
        out[lab] = ClassMetrics(
            precision=precision,
            recall=recall,
            f1=f1,
            support=sum(y == lab for y in labels),
            tp=tp,
            fp=fp,
            fn=fn,
        )
        flags.extend(f"{flag}:{lab}" for flag in class_flags)
    return out, flags


def weighted_f1(per_class: dict[str, ClassMetrics]) -> float:
    """Per-class F1 averaged with class support as weights."""
    total = sum(m.support for m in per_class.values())
    if total == 0:
        return 0.0
    return sum(m.f1 * m.support for m in per_class.values()) / total


def mean_reciprocal_rank(ranks: list[int | None]) -> float:
    """Mean of 1/rank over samples; a missing rank contributes 0."""
    if not ranks:
        raise EmptyDataset("no ranks to score")
    return sum(0.0 if r is None else 1.0 / r for r in ranks) / len(ranks)


def recall_at_k(ranks: list[int | None], k: int) -> float:
    """Fraction of samples whose true item lands in the top k."""
    if not ranks:
        raise EmptyDataset("no ranks to score")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    return sum(r is not None and r <= k for r in ranks) / len(ranks)


def precision_at_k(ranks: list[int | None], k: int) -> float:
    """With a single relevant item per sample: hits within top k, over k."""
    return recall_at_k(ranks, k) / k


def _rank_metric(name: str, ranks: list[int | None] | None) -> float:
    if ranks is None:
        raise ConfigError(f"metric {name!r} needs candidate ranks")
    if name == "mrr":
        return mean_reciprocal_rank(ranks)
    kind, _, k_text = name.partition("@")
    try:
        k = int(k_text)
    except ValueError:
        raise ConfigError(f"unknown metric {name!r}")
    if kind == "recall":
        return recall_at_k(ranks, k)
    if kind == "precision":
        return precision_at_k(ranks, k)
    raise ConfigError(f"unknown metric {name!r}")


def compute_metrics(
    task: TaskSpec,
    predictions: list[str],
    labels: list[str],
    ranks: list[int | None] | None = None,
) -> MetricReport:
    """Score predictions against the task's configured metric set.

    Classification metrics (precision/recall/f1) report on the task's
    positive label; every class is also broken out in per_class. Ranking
    metrics (mrr, recall@k, precision@k) need the true item's rank per
    sample, None when the true item was not ranked at all.
    """
    if not labels:
        raise EmptyDataset("nothing to score")
    per_class, flags = per_class_metrics(predictions, labels, task.label_space)
    positive = task.effective_positive_label
    values: dict[str, float] = {}
    for name in task.metric_set:
        if name == "accuracy":
            values[name] = accuracy(predictions, labels)
        elif name == "precision":
            values[name] = per_class[positive].precision
        elif name == "recall":
            values[name] = per_class[positive].recall
        elif name == "f1":
            values[name] = per_class[positive].f1
        elif name == "weighted_f1":
            values[name] = weighted_f1(per_class)
        elif name == "mrr" or "@" in name:
            values[name] = _rank_metric(name, ranks)
        else:
            raise ConfigError(f"unknown metric {name!r} in task {task.task_id!r}")
    return MetricReport(values=values, per_class=per_class, degenerate_flags=flags)


def ranks_from_probabilities(
    class_probabilities: dict[str, float],
    true_label: str,
) -> int | None:
    """1-based rank of the true label when candidates are ordered by
    descending probability; ties resolve by the insertion order of the
    probability map. None when the label is absent.
    """
    if true_label not in class_probabilities:
        return None
    ordered = sorted(
        class_probabilities.items(),
        key=lambda kv: -kv[1],
    )
    # stable sort keeps insertion order among exact ties
    for i, (lab, _) in enumerate(ordered):
        if lab == true_label:
            return i + 1
    return None  # pragma: no cover - membership checked above

"""Evaluation artifacts: report file, per-sample results, and figures.

The report and results files are deterministic given config, seeds, and
a mock gateway, so they are safe fixtures for regression diffs. Figures
are rendered headless (Agg) next to the delimited output.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from logcascade.pipeline import EvaluationReport, RoutedResult
from logcascade.prompting import display_label
from logcascade.tasks import LabeledSample


def write_report(report: EvaluationReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    return path


def write_results(results: list[RoutedResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_record(), sort_keys=True) + "\n")
    return path


def _uncertainty_figure(results, samples, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = [i / 20 for i in range(21)]
    if samples is not None:
        truth = {s.sample_id: display_label(s) for s in samples}
        right = [
            r.routing.p_uncertain
            for r in results
            if r.slm_prediction.label == truth.get(r.sample_id)
        ]
        wrong = [
            r.routing.p_uncertain
            for r in results
            if r.slm_prediction.label != truth.get(r.sample_id)
        ]
        ax.hist(right, bins=bins, alpha=0.6, label="slm correct")
        ax.hist(wrong, bins=bins, alpha=0.6, label="slm wrong")
    else:
        routed = [r.routing.p_uncertain for r in results if r.routing.route_to_llm]
        kept = [r.routing.p_uncertain for r in results if not r.routing.route_to_llm]
        ax.hist(kept, bins=bins, alpha=0.6, label="kept local")
        ax.hist(routed, bins=bins, alpha=0.6, label="routed")
    ax.axvline(0.5, linestyle="--", linewidth=1, color="black")
    ax.set_xlabel("posterior probability of uncertainty")
    ax.set_ylabel("samples")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _source_figure(report, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    items = sorted(report.source_counts.items())
    ax.bar([k for k, _ in items], [v for _, v in items])
    ax.set_ylabel("samples")
    ax.set_title(
        f"hard fraction {report.hard_fraction:.2f}, "
        f"cost saving {report.cost_saving_fraction:.2f}"
    )
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _subset_figure(report, path):
    metrics = sorted(report.overall.values)
    groups = [("overall", report.overall), ("easy", report.easy), ("hard", report.hard)]
    groups = [(name, rep) for name, rep in groups if rep is not None]
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / len(groups)
    for gi, (name, rep) in enumerate(groups):
        xs = [i + gi * width for i in range(len(metrics))]
        ax.bar(xs, [rep.values.get(m, 0.0) for m in metrics], width=width, label=name)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(metrics))])
    ax.set_xticklabels(metrics, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_figures(
    report: EvaluationReport,
    results: list[RoutedResult],
    out_dir: str | Path,
    samples: list[LabeledSample] | None = None,
) -> list[Path]:
    """Render the evaluation figures; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        out / "uncertainty_hist.png",
        out / "source_counts.png",
        out / "subset_metrics.png",
    ]
    _uncertainty_figure(results, samples, paths[0])
    _source_figure(report, paths[1])
    _subset_figure(report, paths[2])
    return paths

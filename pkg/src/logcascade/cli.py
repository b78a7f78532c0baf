"""Command-line surface: synth, train, calibrate, build-cases, run, evaluate."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from pathlib import Path

import click
import requests

from logcascade.casebank import (
    CaseBank,
    apply_quality_filter,
    build_casebank,
    embedding_similarity,
    partition_validation,
)
from logcascade.config import AppConfig
from logcascade.errors import CascadeError
from logcascade.gateway import (
    DisabledGateway,
    HttpGateway,
    OracleGateway,
    ScriptedGateway,
)
from logcascade.pipeline import Dependencies, evaluate as evaluate_set, run_adaptive
from logcascade.predictor import PredictorModel, train_reference
from logcascade.prompting import display_label
from logcascade.report import render_figures, write_report, write_results
from logcascade.retrieval import HashedNgramEmbedder, RemoteEmbedder
from logcascade.synth import synthesize_corpus, synthetic_task_spec
from logcascade.tasks import LabeledSample, TaskSpec, load_samples, save_samples
from logcascade.uncertainty import Calibration, RoutingPolicy, calibrate_variation

logger = logging.getLogger("logcascade")

_POLICIES = [p.value for p in RoutingPolicy if p is not RoutingPolicy.CLASSIFIER]


def _apply_overrides(cfg: AppConfig, seed, policy, n_passes, top_k) -> AppConfig:
    pipeline = cfg.pipeline
    if seed is not None:
        pipeline = dataclasses.replace(pipeline, seed=seed)
        cfg.predictor = dataclasses.replace(cfg.predictor, seed=seed)
        cfg.synth = dataclasses.replace(cfg.synth, seed=seed)
    if policy is not None:
        pipeline = dataclasses.replace(pipeline, policy=policy)
    if n_passes is not None:
        pipeline = dataclasses.replace(pipeline, n_passes=n_passes)
    if top_k is not None:
        pipeline = dataclasses.replace(pipeline, top_k=top_k)
    cfg.pipeline = pipeline
    return cfg


def _make_embedder(cfg: AppConfig):
    if cfg.retrieval.embedder == "fallback":
        return HashedNgramEmbedder()

    def post(payload: dict) -> dict:
        resp = requests.post(
            cfg.retrieval.remote_endpoint, json=payload, timeout=cfg.gateway.timeout_s
        )
        resp.raise_for_status()
        return resp.json()

    return RemoteEmbedder(
        post, cfg.retrieval.remote_dimension, cfg.retrieval.remote_embedder_id
    )


def _make_gateway(
    cfg: AppConfig, mock_llm: str, truth: dict[str, str], label_space, may_disable=False
):
    if mock_llm == "off":
        if not cfg.gateway.endpoint:
            if may_disable:
                return DisabledGateway(cfg.gateway)
            raise click.ClickException(
                "no gateway endpoint configured; set one or use --mock-llm"
            )
        return HttpGateway(cfg.gateway)
    if mock_llm.startswith("scripted:"):
        path = mock_llm.split(":", 1)[1]
        if not Path(path).exists():
            raise click.ClickException(f"scripted reply file not found: {path}")
        return ScriptedGateway.from_file(path, config=cfg.gateway)
    if mock_llm == "oracle" or mock_llm.startswith("oracle:"):
        wrong_rate = float(mock_llm.split(":", 1)[1]) if ":" in mock_llm else 0.0
        return OracleGateway(
            truth,
            list(label_space),
            wrong_rate=wrong_rate,
            seed=cfg.pipeline.seed,
            unknown_behavior="refuse",
            config=cfg.gateway,
        )
    raise click.BadParameter(
        f"unknown --mock-llm value {mock_llm!r}; use off, scripted:<file>, "
        "or oracle[:wrong-rate]"
    )


def _truth_from(data_dir: Path) -> dict[str, str]:
    truth: dict[str, str] = {}
    for name in ("train.jsonl", "validation.jsonl", "test.jsonl"):
        path = data_dir / name
        if path.exists():
            for s in load_samples(path):
                truth[s.sample_id] = display_label(s)
    return truth


def _load_dependencies(
    cfg: AppConfig, data_dir: Path, artifacts_dir: Path, mock_llm: str, truth
) -> Dependencies:
    task = TaskSpec.load(data_dir / "task.json")
    model = PredictorModel.load(artifacts_dir / "model.json")
    calibration = Calibration.load(artifacts_dir / "calibration.json")
    embedder = _make_embedder(cfg)
    bank_path = artifacts_dir / "casebank.jsonl"
    if bank_path.exists():
        bank = CaseBank.load(bank_path)
    else:
        bank = CaseBank(embedder_id=embedder.embedder_id, dimension=embedder.dimension)
    gateway = _make_gateway(
        cfg,
        mock_llm,
        truth,
        task.label_space,
        may_disable=cfg.pipeline.routing_policy is RoutingPolicy.NEVER_LLM,
    )
    return Dependencies(
        model=model,
        calibration=calibration,
        bank=bank,
        embedder=embedder,
        gateway=gateway,
        task=task,
    )


def _fail_on(exc: CascadeError):
    raise click.ClickException(str(exc))


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON config file; omitted sections use defaults.")
@click.option("--seed", type=int, default=None, help="Override every configured seed.")
@click.option("--policy", type=click.Choice(_POLICIES), default=None)
@click.option("--n-passes", type=int, default=None)
@click.option("--top-k", type=int, default=None)
@click.option("--mock-llm", default="off",
              help="off | scripted:<file> | oracle[:wrong-rate]")
@click.option("--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, seed, policy, n_passes, top_k, mock_llm, verbose):
    """Adaptive small-to-large model cascade for log analysis."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)
    try:
        cfg = AppConfig.load(config_path) if config_path else AppConfig()
        cfg = _apply_overrides(cfg, seed, policy, n_passes, top_k)
    except CascadeError as exc:
        _fail_on(exc)
    ctx.obj = {"cfg": cfg, "mock_llm": mock_llm}


@main.command()
@click.option("--out", "out_dir", default="data", type=click.Path(file_okay=False))
@click.pass_obj
def synth(obj, out_dir):
    """Generate a synthetic labeled corpus and its task description."""
    cfg = obj["cfg"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        split = synthesize_corpus(cfg.synth)
    except CascadeError as exc:
        _fail_on(exc)
    synthetic_task_spec(cfg.synth).save(out / "task.json")
    save_samples(split.train, out / "train.jsonl")
    save_samples(split.validation, out / "validation.jsonl")
    save_samples(split.test, out / "test.jsonl")
    click.echo(
        f"wrote {len(split.train)} train / {len(split.validation)} validation / "
        f"{len(split.test)} test samples to {out}"
    )


@main.command()
@click.option("--data", "data_dir", default="data", type=click.Path(file_okay=False))
@click.option("--artifacts", "artifacts_dir", default="artifacts",
              type=click.Path(file_okay=False))
@click.pass_obj
def train(obj, data_dir, artifacts_dir):
    """Train the reference predictor on the train split."""
    cfg = obj["cfg"]
    data, artifacts = Path(data_dir), Path(artifacts_dir)
    artifacts.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    try:
        task = TaskSpec.load(data / "task.json")
        samples = load_samples(data / "train.jsonl")
        model = train_reference(samples, cfg.predictor, task)
    except (CascadeError, FileNotFoundError) as exc:
        _fail_on(exc)
    model.save(artifacts / "model.json")
    logger.info("trained in %.2fs", time.perf_counter() - started)
    hits = sum(
        model.predict(s.input_text, candidates=s.candidates).label == display_label(s)
        for s in samples
    )
    click.echo(f"trained on {len(samples)} samples, train accuracy {hits / len(samples):.4f}")


@main.command()
@click.option("--data", "data_dir", default="data", type=click.Path(file_okay=False))
@click.option("--artifacts", "artifacts_dir", default="artifacts",
              type=click.Path(file_okay=False))
@click.pass_obj
def calibrate(obj, data_dir, artifacts_dir):
    """Measure validation error rate and pass variation."""
    cfg = obj["cfg"]
    data, artifacts = Path(data_dir), Path(artifacts_dir)
    started = time.perf_counter()
    try:
        model = PredictorModel.load(artifacts / "model.json")
        validation = load_samples(data / "validation.jsonl")
        correct, errors, err = partition_validation(model, validation)
        calibration = calibrate_variation(
            model, correct, cfg.pipeline.n_passes, cfg.pipeline.seed, err
        )
    except (CascadeError, FileNotFoundError) as exc:
        _fail_on(exc)
    calibration.save(artifacts / "calibration.json")
    save_samples(errors, artifacts / "validation_errors.jsonl")
    logger.info("calibrated in %.2fs", time.perf_counter() - started)
    click.echo(
        f"error rate {err:.4f}, variation {calibration.variation:.6f}, "
        f"{len(errors)} error samples saved"
    )


@main.command("build-cases")
@click.option("--data", "data_dir", default="data", type=click.Path(file_okay=False))
@click.option("--artifacts", "artifacts_dir", default="artifacts",
              type=click.Path(file_okay=False))
@click.pass_obj
def build_cases(obj, data_dir, artifacts_dir):
    """Author an error-case bank from the calibration misses."""
    cfg = obj["cfg"]
    data, artifacts = Path(data_dir), Path(artifacts_dir)
    bank_path = artifacts / "casebank.jsonl"
    started = time.perf_counter()
    try:
        task = TaskSpec.load(data / "task.json")
        errors = load_samples(artifacts / "validation_errors.jsonl")
        embedder = _make_embedder(cfg)
        truth = {s.sample_id: display_label(s) for s in errors}
        gateway = _make_gateway(cfg, obj["mock_llm"], truth, task.label_space)
        bank = build_casebank(
            errors,
            gateway,
            embedder,
            task,
            checkpoint_path=bank_path,
            model_name=cfg.gateway.model,
            max_prompt_tokens=cfg.pipeline.max_prompt_tokens,
        )
        flagged = 0
        if cfg.quality.enabled:
            flagged = apply_quality_filter(
                bank,
                gateway,
                task,
                embedding_similarity(embedder),
                threshold=cfg.quality.threshold,
                regenerations=cfg.quality.regenerations,
                temperature=cfg.quality.temperature,
                model_name=cfg.gateway.model,
            )
            bank.save(bank_path)
    except (CascadeError, FileNotFoundError) as exc:
        _fail_on(exc)
    logger.info("built cases in %.2fs", time.perf_counter() - started)
    click.echo(f"built {len(bank)} cases ({flagged} flagged) at {bank_path}")


@main.command()
@click.option("--data", "data_dir", default="data", type=click.Path(file_okay=False))
@click.option("--artifacts", "artifacts_dir", default="artifacts",
              type=click.Path(file_okay=False))
@click.option("--text", default=None, help="Input text; mutually exclusive with --input-file.")
@click.option("--input-file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--candidate", "candidates", multiple=True,
              help="Candidate answer for ranking tasks; repeatable.")
@click.option("--sample-id", default="cli-input")
@click.pass_obj
def run(obj, data_dir, artifacts_dir, text, input_file, candidates, sample_id):
    """Run the cascade on one input and print the routed result."""
    cfg = obj["cfg"]
    if (text is None) == (input_file is None):
        raise click.UsageError("provide exactly one of --text or --input-file")
    if input_file is not None:
        text = Path(input_file).read_text(encoding="utf-8").strip()
    data, artifacts = Path(data_dir), Path(artifacts_dir)
    try:
        deps = _load_dependencies(
            cfg, data, artifacts, obj["mock_llm"], _truth_from(data)
        )
        sample = LabeledSample(
            sample_id, text, "", 0, candidates=list(candidates) or None
        )
        result = run_adaptive(sample, deps, cfg.pipeline)
    except (CascadeError, FileNotFoundError) as exc:
        _fail_on(exc)
    click.echo(json.dumps(result.to_record(), indent=2, sort_keys=True))


@main.command("evaluate")
@click.option("--data", "data_dir", default="data", type=click.Path(file_okay=False))
@click.option("--artifacts", "artifacts_dir", default="artifacts",
              type=click.Path(file_okay=False))
@click.option("--figures/--no-figures", default=True)
@click.pass_obj
def evaluate_cmd(obj, data_dir, artifacts_dir, figures):
    """Evaluate the cascade on the test split and write the report."""
    cfg = obj["cfg"]
    data, artifacts = Path(data_dir), Path(artifacts_dir)
    started = time.perf_counter()
    try:
        test_set = load_samples(data / "test.jsonl")
        truth = {s.sample_id: display_label(s) for s in test_set}
        deps = _load_dependencies(cfg, data, artifacts, obj["mock_llm"], truth)
        report, results = evaluate_set(test_set, deps, cfg.pipeline)
    except (CascadeError, FileNotFoundError) as exc:
        _fail_on(exc)
    write_report(report, artifacts / "report.json")
    write_results(results, artifacts / "results.jsonl")
    if figures:
        render_figures(report, results, artifacts / "figures", samples=test_set)
    logger.info("evaluated in %.2fs", time.perf_counter() - started)
    for name, value in sorted(report.overall.values.items()):
        click.echo(f"{name}: {value:.4f}")
    click.echo(f"hard_fraction: {report.hard_fraction:.4f}")
    click.echo(f"cost_saving_fraction: {report.cost_saving_fraction:.4f}")
    click.echo(f"llm_calls: {report.llm_calls}")
    click.echo(f"report: {artifacts / 'report.json'}")


if __name__ == "__main__":
    main()

"""End-to-end cascade orchestration and batch evaluation.

Per input the flow is: deterministic small-model prediction, then N
stochastic passes feeding the posterior routing decision, and only for
routed inputs an embedding lookup over the error-case bank, a
case-enhanced prompt, and one large-model call. A final answer always
exists: parse failures and exhausted gateways fall back to the small
model's label, and every fallback is counted where reports can see it.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from logcascade.casebank import CaseBank
from logcascade.config import PipelineConfig
from logcascade.errors import EmptyDataset, GatewayError, ParseError
from logcascade.gateway import CompletionRequest, Gateway
from logcascade.hashing import derive_seed, stable_hash64
from logcascade.metrics import MetricReport, compute_metrics, ranks_from_probabilities
from logcascade.predictor import PassProvider, Prediction, PredictorModel
from logcascade.prompting import (
    PromptSpec,
    build_ecr_prompt,
    display_label,
    parse_response,
    sample_key_text,
)
from logcascade.retrieval import Embedder, top_k
from logcascade.tasks import LabeledSample, TaskKind, TaskSpec
from logcascade.uncertainty import (
    Calibration,
    RoutingDecision,
    RoutingPolicy,
    UncertaintyEstimate,
    decide_route,
    estimate_from_passes,
)

SOURCE_SLM = "slm"
SOURCE_LLM = "llm"
SOURCE_PARSE_FALLBACK = "llm-parse-fallback"


@dataclass(slots=True)
class RoutedResult:
    """Everything the cascade decided about one input."""

    sample_id: str
    final_label: str
    source: str
    slm_prediction: Prediction
    uncertainty: UncertaintyEstimate
    routing: RoutingDecision
    prompt: PromptSpec | None = None
    raw_llm_response: str | None = None
    tokens_in: int = 0
    tokens_out: int = 0
    failure: str | None = None

    def to_record(self) -> dict:
        """Flat JSON-friendly form for the delimited results file."""
        return {
            "sample_id": self.sample_id,
            "final_label": self.final_label,
            "source": self.source,
            "slm_label": self.slm_prediction.label,
            "slm_top_probability": self.slm_prediction.top_probability,
            "p_uncertain": self.routing.p_uncertain,
            "uncertain_count": self.uncertainty.uncertain_count,
            "routed": self.routing.route_to_llm,
            "policy": self.routing.policy.value,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "raw_llm_response": self.raw_llm_response,
            "failure": self.failure,
        }


@dataclass(slots=True)
class Dependencies:
    """Read-only collaborators shared across every sample."""

    model: PredictorModel | PassProvider
    calibration: Calibration
    bank: CaseBank
    embedder: Embedder
    gateway: Gateway
    task: TaskSpec


def run_adaptive(
    sample: LabeledSample,
    deps: Dependencies,
    config: PipelineConfig,
) -> RoutedResult:
    """Run the three-step cascade on one input.

    Ground truth on the sample is only consulted by the oracle routing
    policy; every other policy ignores it.
    """
    candidates = sample.candidates
    model = deps.model
    pred = model.predict(sample.input_text, candidates=candidates)
    passes = model.stochastic_passes(
        sample.input_text,
        pred.label,
        config.n_passes,
        derive_seed(config.seed, "sample", sample.sample_id),
        candidates=candidates,
    )
    estimate = estimate_from_passes(deps.calibration, passes)
    slm_correct = None
    if sample.label != "":
        slm_correct = pred.label == display_label(sample)
    decision = decide_route(
        estimate, config.routing_policy, deps.calibration, slm_correct=slm_correct
    )

    if not decision.route_to_llm:
        return RoutedResult(
            sample_id=sample.sample_id,
            final_label=pred.label,
            source=SOURCE_SLM,
            slm_prediction=pred,
            uncertainty=estimate,
            routing=decision,
        )

    key = sample_key_text(sample)
    retrieved = top_k(deps.embedder.embed(key), deps.bank, k=config.top_k)
    prompt = build_ecr_prompt(
        deps.task, retrieved, key, max_prompt_tokens=config.max_prompt_tokens
    )
    request = CompletionRequest(
        model_name=deps.gateway.config.model,
        messages=[{"role": "user", "content": prompt.rendered}],
        temperature=0.0,
        metadata={"sample_id": sample.sample_id, "purpose": "inference"},
    )
    try:
        response = deps.gateway.complete(request)
    except GatewayError as exc:
        if config.gateway_failure == "fail":
            raise
        return RoutedResult(
            sample_id=sample.sample_id,
            final_label=pred.label,
            source=SOURCE_SLM,
            slm_prediction=pred,
            uncertainty=estimate,
            routing=decision,
            prompt=prompt,
            failure=f"gateway: {exc}",
        )
    try:
        parsed = parse_response(response.content, deps.task)
        return RoutedResult(
            sample_id=sample.sample_id,
            final_label=parsed.label,
            source=SOURCE_LLM,
            slm_prediction=pred,
            uncertainty=estimate,
            routing=decision,
            prompt=prompt,
            raw_llm_response=response.content,
            tokens_in=response.input_tokens,
            tokens_out=response.output_tokens,
        )
    except ParseError:
        return RoutedResult(
            sample_id=sample.sample_id,
            final_label=pred.label,
            source=SOURCE_PARSE_FALLBACK,
            slm_prediction=pred,
            uncertainty=estimate,
            routing=decision,
            prompt=prompt,
            raw_llm_response=response.content,
            tokens_in=response.input_tokens,
            tokens_out=response.output_tokens,
        )


@dataclass(slots=True)
class EvaluationReport:
    task_id: str
    policy: str
    n_samples: int
    overall: MetricReport
    easy: MetricReport | None
    hard: MetricReport | None
    easy_count: int
    hard_count: int
    hard_fraction: float
    cost_saving_fraction: float
    llm_calls: int
    parse_fallbacks: int
    gateway_failures: int
    source_counts: dict[str, int]
    cost: dict
    seed: int
    n_passes: int
    top_k: int
    config_hash: str
    calibration: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "policy": self.policy,
            "n_samples": self.n_samples,
            "overall": self.overall.to_dict(),
            "easy": self.easy.to_dict() if self.easy else None,
            "hard": self.hard.to_dict() if self.hard else None,
            "easy_count": self.easy_count,
            "hard_count": self.hard_count,
            "hard_fraction": self.hard_fraction,
            "cost_saving_fraction": self.cost_saving_fraction,
            "llm_calls": self.llm_calls,
            "parse_fallbacks": self.parse_fallbacks,
            "gateway_failures": self.gateway_failures,
            "source_counts": dict(sorted(self.source_counts.items())),
            "cost": dict(self.cost),
            "seed": self.seed,
            "n_passes": self.n_passes,
            "top_k": self.top_k,
            "config_hash": self.config_hash,
            "calibration": dict(self.calibration),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _truth_label(sample: LabeledSample) -> str:
    return display_label(sample)


def _rank_for(result: RoutedResult, truth: str, task: TaskSpec) -> int | None:
    """1-based rank of the true candidate for ranking metrics.

    Small-model answers carry a full candidate distribution; large-model
    answers name a single candidate, which ranks 1 when right and
    unranked when wrong.
    """
    if result.source == SOURCE_LLM:
        return 1 if result.final_label == truth else None
    return ranks_from_probabilities(result.slm_prediction.class_probabilities, truth)


def _subset_metrics(
    task: TaskSpec,
    pairs: list[tuple[str, str]],
    ranks: list[int | None] | None,
) -> MetricReport | None:
    if not pairs:
        return None
    preds = [p for p, _ in pairs]
    labels = [y for _, y in pairs]
    return compute_metrics(task, preds, labels, ranks=ranks)


def _config_fingerprint(config: PipelineConfig, deps: Dependencies) -> str:
    body = json.dumps(
        {
            "policy": config.policy,
            "n_passes": config.n_passes,
            "seed": config.seed,
            "top_k": config.top_k,
            "gateway_failure": config.gateway_failure,
            "max_prompt_tokens": config.max_prompt_tokens,
            "task_id": deps.task.task_id,
            "error_rate": deps.calibration.error_rate,
            "variation": deps.calibration.variation,
            "embedder_id": deps.bank.embedder_id,
            "bank_size": len(deps.bank),
        },
        sort_keys=True,
    )
    return f"{stable_hash64(body, namespace='config'):016x}"


def evaluate(
    test_set: list[LabeledSample],
    deps: Dependencies,
    config: PipelineConfig,
) -> tuple[EvaluationReport, list[RoutedResult]]:
    """Score the cascade over a labeled set.

    Samples may be processed by a small worker pool; results are keyed by
    input position, so aggregation order (and the report) never depends
    on scheduling.
    """
    if not test_set:
        raise EmptyDataset("empty test set")
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda s: run_adaptive(s, deps, config), test_set))
    else:
        results = [run_adaptive(s, deps, config) for s in test_set]

    task = deps.task
    truths = [_truth_label(s) for s in test_set]
    needs_ranks = task.kind == TaskKind.RANKING or any(
        "@" in m or m == "mrr" for m in task.metric_set
    )

    all_pairs = [(r.final_label, y) for r, y in zip(results, truths)]
    all_ranks = (
        [_rank_for(r, y, task) for r, y in zip(results, truths)] if needs_ranks else None
    )
    easy_idx = [i for i, r in enumerate(results) if not r.routing.route_to_llm]
    hard_idx = [i for i, r in enumerate(results) if r.routing.route_to_llm]

    overall = compute_metrics(
        task, [p for p, _ in all_pairs], [y for _, y in all_pairs], ranks=all_ranks
    )
    easy = _subset_metrics(
        task,
        [all_pairs[i] for i in easy_idx],
        [all_ranks[i] for i in easy_idx] if all_ranks else None,
    )
    hard = _subset_metrics(
        task,
        [all_pairs[i] for i in hard_idx],
        [all_ranks[i] for i in hard_idx] if all_ranks else None,
    )

    source_counts: dict[str, int] = {}
    for r in results:
        source_counts[r.source] = source_counts.get(r.source, 0) + 1
    hard_fraction = len(hard_idx) / len(test_set)
    report = EvaluationReport(
        task_id=task.task_id,
        policy=config.policy,
        n_samples=len(test_set),
        overall=overall,
        easy=easy,
        hard=hard,
        easy_count=len(easy_idx),
        hard_count=len(hard_idx),
        hard_fraction=hard_fraction,
        cost_saving_fraction=1.0 - hard_fraction,
        llm_calls=sum(r.raw_llm_response is not None for r in results),
        parse_fallbacks=sum(r.source == SOURCE_PARSE_FALLBACK for r in results),
        gateway_failures=sum(r.failure is not None for r in results),
        source_counts=source_counts,
        cost=deps.gateway.ledger.snapshot(),
        seed=config.seed,
        n_passes=config.n_passes,
        top_k=config.top_k,
        config_hash=_config_fingerprint(config, deps),
        calibration={
            "error_rate": deps.calibration.error_rate,
            "variation": deps.calibration.variation,
            "n_passes": deps.calibration.n_passes,
            "n_correct_samples": deps.calibration.n_correct_samples,
        },
    )
    return report, results

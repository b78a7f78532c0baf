"""Error-prone case database: construction, quality filter, persistence.

During preparation the validation set is partitioned by the small
model's correctness. Each mispredicted sample is sent to the large model
with a reason-instruction prompt; the returned analysis is stored
verbatim under the raw input as key, embedded for later similarity
search. A self-consistency filter can flag cases whose analysis is not
stable under regeneration; flagged cases stay in the bank but are
excluded from retrieval.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from logcascade.errors import (
    CaseAnalysisEmpty,
    ConfigError,
    DimensionMismatch,
    EmptyValidation,
    GatewayError,
)
from logcascade.gateway import CompletionRequest, Gateway
from logcascade.prompting import build_reason_instruction, display_label, sample_key_text
from logcascade.retrieval import Embedder, EmbeddingVector, cosine
from logcascade.tasks import LabeledSample, TaskSpec

logger = logging.getLogger(__name__)

BANK_VERSION = "casebank-v1"
QUALITY_THRESHOLD = 0.95
QUALITY_REGENERATIONS = 2
QUALITY_TEMPERATURE = 0.7


@dataclass(slots=True)
class ErrorCase:
    key: str
    reason: str
    ground_truth: str
    embedding: EmbeddingVector
    task_id: str
    created_at: float
    flagged: bool = False

    def __post_init__(self) -> None:
        if not self.key:
            raise ConfigError("case key must be non-empty")
        if not self.reason:
            raise ConfigError("case reason must be non-empty")


class CaseBank:
    """Ordered key-value store of error cases, one per distinct key."""

    def __init__(self, embedder_id: str, dimension: int) -> None:
        self.embedder_id = embedder_id
        self.dimension = dimension
        self._cases: list[ErrorCase] = []
        self._index: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._cases)

    def insert(self, case: ErrorCase) -> None:
        """Add a case; a duplicate key replaces the earlier value in place."""
        if case.embedding.dimension != self.dimension:
            raise DimensionMismatch(
                f"case embedding dim {case.embedding.dimension}, bank dim {self.dimension}"
            )
        at = self._index.get(case.key)
        if at is not None:
            logger.warning("duplicate case key %r: keeping the latest analysis", case.key[:80])
            self._cases[at] = case
        else:
            self._index[case.key] = len(self._cases)
            self._cases.append(case)

    def all_cases(self) -> list[ErrorCase]:
        return list(self._cases)

    def active_cases(self) -> list[ErrorCase]:
        """Cases eligible for retrieval: everything not flagged low-quality."""
        return [c for c in self._cases if not c.flagged]

    # --- persistence: JSON Lines with a header record ----------------------

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {
                "embedder_id": self.embedder_id,
                "dimension": self.dimension,
                "tool_version": BANK_VERSION,
            }
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for c in self._cases:
                record = {
                    "key": c.key,
                    "reason": c.reason,
                    "ground_truth": c.ground_truth,
                    "embedding": c.embedding.values.tolist(),
                    "task_id": c.task_id,
                    "created_at": c.created_at,
                    "flagged": c.flagged,
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CaseBank":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line for line in fh.read().splitlines() if line.strip()]
        if not lines:
            raise ConfigError(f"empty case-bank file: {path}")
        header = json.loads(lines[0])
        if header.get("tool_version") != BANK_VERSION:
            raise ConfigError(f"unsupported bank version {header.get('tool_version')!r}")
        bank = cls(embedder_id=header["embedder_id"], dimension=header["dimension"])
        for line in lines[1:]:
            rec = json.loads(line)
            bank.insert(
                ErrorCase(
                    key=rec["key"],
                    reason=rec["reason"],
                    ground_truth=rec["ground_truth"],
                    embedding=EmbeddingVector(
                        rec["embedding"], header["dimension"], header["embedder_id"]
                    ),
                    task_id=rec["task_id"],
                    created_at=rec["created_at"],
                    flagged=rec["flagged"],
                )
            )
        return bank


def partition_validation(
    model,
    validation: list[LabeledSample],
) -> tuple[list[LabeledSample], list[LabeledSample], float]:
    """Split validation samples by deterministic prediction correctness.

    Returns (correct, error, err) where err is the error-sample fraction.
    """
    if not validation:
        raise EmptyValidation("empty validation set")
    correct: list[LabeledSample] = []
    error: list[LabeledSample] = []
    for s in validation:
        pred = model.predict(s.input_text, candidates=s.candidates) if s.candidates is not None \
            else model.predict(s.input_text)
        (correct if pred.label == display_label(s) else error).append(s)
    return correct, error, len(error) / len(validation)


def analyze_error_case(
    gateway: Gateway,
    task: TaskSpec,
    sample: LabeledSample,
    model_name: str = "",
    max_prompt_tokens: int | None = None,
    temperature: float = 0.0,
) -> str:
    """Ask the large model to explain one mispredicted sample.

    The reply text is returned verbatim; it becomes the stored analysis.
    """
    prompt = build_reason_instruction(task, sample, max_prompt_tokens=max_prompt_tokens)
    response = gateway.complete(
        CompletionRequest(
            model_name=model_name,
            messages=[{"role": "user", "content": prompt.rendered}],
            temperature=temperature,
            metadata={"sample_id": sample.sample_id, "purpose": "case-analysis"},
        )
    )
    if not response.content.strip():
        raise CaseAnalysisEmpty(f"empty analysis for sample {sample.sample_id}")
    return response.content


def build_casebank(
    error_samples: list[LabeledSample],
    gateway: Gateway,
    embedder: Embedder,
    task: TaskSpec,
    checkpoint_path: str | Path | None = None,
    model_name: str = "",
    max_prompt_tokens: int | None = None,
    clock: Callable[[], float] = time.time,
) -> CaseBank:
    """Author and embed one case per error sample.

    The large-model call is the fragile step, so the bank is checkpointed
    after every completed case when a path is given; a mid-build gateway
    failure leaves the finished cases on disk and re-raises.
    """
    if not error_samples:
        raise EmptyValidation("no error samples to build from")
    bank = CaseBank(embedder_id=embedder.embedder_id, dimension=embedder.dimension)
    for sample in error_samples:
        try:
            reason = analyze_error_case(
                gateway, task, sample, model_name=model_name, max_prompt_tokens=max_prompt_tokens
            )
        except GatewayError:
            if checkpoint_path is not None:
                bank.save(checkpoint_path)
            raise
        key = sample_key_text(sample)
        bank.insert(
            ErrorCase(
                key=key,
                reason=reason,
                ground_truth=display_label(sample),
                embedding=embedder.embed(key),
                task_id=task.task_id,
                created_at=clock(),
            )
        )
        if checkpoint_path is not None:
            bank.save(checkpoint_path)
    return bank


def embedding_similarity(embedder: Embedder) -> Callable[[str, str], float]:
    """Text-pair similarity through the given embedder's space."""

    def sim(a: str, b: str) -> float:
        return cosine(embedder.embed(a), embedder.embed(b))

    return sim


def quality_check(
    gateway: Gateway,
    task: TaskSpec,
    case: ErrorCase,
    similarity_fn: Callable[[str, str], float],
    threshold: float = QUALITY_THRESHOLD,
    regenerations: int = QUALITY_REGENERATIONS,
    temperature: float = QUALITY_TEMPERATURE,
    model_name: str = "",
) -> bool:
    """Self-consistency filter for one case; True means keep.

    The analysis is regenerated at nonzero temperature; if any regeneration
    lands below the similarity threshold against the stored reason, the
    case is unstable and gets flagged. Similarity exactly at the threshold
    still keeps the case.
    """
    if temperature <= 0.0:
        raise ConfigError("quality check regenerations need temperature > 0")
    probe = LabeledSample(
        sample_id=f"quality:{case.task_id}",
        input_text=case.key,
        label=case.ground_truth,
        timestamp_order=0,
    )
    for _ in range(regenerations):
        regenerated = analyze_error_case(
            gateway, task, probe, model_name=model_name, temperature=temperature
        )
        if similarity_fn(case.reason, regenerated) < threshold:
            return False
    return True


def apply_quality_filter(
    bank: CaseBank,
    gateway: Gateway,
    task: TaskSpec,
    similarity_fn: Callable[[str, str], float],
    threshold: float = QUALITY_THRESHOLD,
    regenerations: int = QUALITY_REGENERATIONS,
    temperature: float = QUALITY_TEMPERATURE,
    model_name: str = "",
) -> int:
    """Flag unstable cases in place; returns how many were flagged."""
    flagged = 0
    for case in bank.all_cases():
        keep = quality_check(
            gateway,
            task,
            case,
            similarity_fn,
            threshold=threshold,
            regenerations=regenerations,
            temperature=temperature,
            model_name=model_name,
        )
        if not keep:
            case.flagged = True
            flagged += 1
    return flagged

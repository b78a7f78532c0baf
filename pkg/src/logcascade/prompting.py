"""Prompt rendering and response parsing.

Three prompt kinds exist: the reason-instruction used while building the
error-case bank, the case-enhanced inference prompt whose retrieved
examples sit in ascending similarity order so the strongest match lands
next to the query, and a plain in-context-learning baseline prompt.
Rendering is pure string assembly; fixed "Reason:"/"Result:" markers
make the reply parseable by regular expression.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

from logcascade.errors import (
    ConfigError,
    NoCasesProvided,
    ParseError,
    PromptTooLong,
)
from logcascade.gateway import count_tokens
from logcascade.tasks import LabeledSample, TaskKind, TaskSpec

if TYPE_CHECKING:
    from logcascade.retrieval import RetrievedCase

TEMPLATE_VERSION = "prompt-v1"

REASON_MARKER = "Reason:"
RESULT_MARKER = "Result:"
PITFALL_MARKER = "Pitfall:"


class PromptKind(str, Enum):
    REASON_INSTRUCTION = "reason-instruction"
    ECR = "ecr"
    ICL = "icl"


@dataclass(slots=True)
class PromptSpec:
    kind: PromptKind
    task_description: str
    requirement: str
    cases_or_examples: list[str]
    input_text: str
    rendered: str


@dataclass(slots=True)
class ParsedResponse:
    label: str
    reason_text: str | None
    raw: str


def sample_key_text(sample: LabeledSample) -> str:
    """Canonical text for a sample: the identity used for embeddings,
    case-bank keys, and prompt input sections alike.

    Ranking samples include their numbered candidate list, since the
    decision is only meaningful against a specific candidate set.
    """
    if sample.candidates is None:
        return sample.input_text
    numbered = "\n".join(f"{i + 1}. {c}" for i, c in enumerate(sample.candidates))
    return f"{sample.input_text}\nCandidates:\n{numbered}"


def display_label(sample: LabeledSample) -> str:
    """Ground truth as prompt text: 1-based position for ranking samples."""
    if isinstance(sample.label, int):
        return str(sample.label + 1)
    return sample.label


def _check_budget(rendered: str, max_prompt_tokens: int | None) -> None:
    if max_prompt_tokens is not None and count_tokens(rendered) > max_prompt_tokens:
        raise PromptTooLong(
            f"prompt is ~{count_tokens(rendered)} tokens, budget {max_prompt_tokens};"
            " refusing to truncate"
        )


def _answer_line(task: TaskSpec) -> str:
    if task.kind == TaskKind.RANKING:
        answer = "the number of the correct candidate"
    else:
        answer = "exactly one of: " + ", ".join(task.label_space)
    return (
        f'Respond with "{REASON_MARKER}" followed by your reasoning, '
        f'then on the final line "{RESULT_MARKER}" followed by {answer}.'
    )


def build_reason_instruction(
    task: TaskSpec,
    sample: LabeledSample,
    max_prompt_tokens: int | None = None,
) -> PromptSpec:
    """Prompt asking the large model to explain a known-wrong case.

    The model receives the input together with its ground truth and must
    articulate why that answer is correct and which pitfalls could fool a
    classifier. The reply becomes the stored analysis for this case.
    """
    truth = display_label(sample)
    if not isinstance(sample.label, int) and sample.label not in task.label_space:
        raise ConfigError(f"ground truth {sample.label!r} not in task label space")
    requirement = (
        f"{task.prompt_requirement}\n"
        f"The ground truth answer for this input is given below. Explain the "
        f"reasoning that leads to this answer, then describe the potential "
        f"pitfalls that could mislead a classifier on inputs like this one. "
        f'Respond with "{REASON_MARKER}" followed by the reasoning and '
        f'"{PITFALL_MARKER}" followed by the pitfalls.'
    )
    key = sample_key_text(sample)
    rendered = (
        f"## Task\n{task.prompt_task_description}\n\n"
        f"## Requirement\n{requirement}\n\n"
        f"## Input\n{key}\n\n"
        f"## Ground truth\n{truth}\n"
    )
    _check_budget(rendered, max_prompt_tokens)
    return PromptSpec(
        kind=PromptKind.REASON_INSTRUCTION,
        task_description=task.prompt_task_description,
        requirement=requirement,
        cases_or_examples=[],
        input_text=key,
        rendered=rendered,
    )


def build_ecr_prompt(
    task: TaskSpec,
    retrieved: list["RetrievedCase"],
    input_text: str,
    max_prompt_tokens: int | None = None,
) -> PromptSpec:
    """Inference prompt enriched with similar error-prone cases.

    Cases must already be in ascending similarity order; the most similar
    one renders last, adjacent to the query. Each case shows its input,
    the stored analysis, and the ground truth in the same format the
    model is told to follow for its own answer.
    """
    if not retrieved:
        raise NoCasesProvided("cannot build a case-enhanced prompt with zero cases")
    sims = [rc.similarity for rc in retrieved]
    if any(b < a for a, b in zip(sims, sims[1:])):
        raise ConfigError("retrieved cases must be in ascending similarity order")
    requirement = (
        f"{task.prompt_requirement}\n"
        "The cases below are error-prone inputs similar to yours. Refer to their "
        "reasoning and notice the pitfalls they describe. Give your reasoning "
        "first and then the answer, following the format of the cases.\n"
        f"{_answer_line(task)}"
    )
    case_blocks = []
    for i, rc in enumerate(retrieved):
        case_blocks.append(
            f"### Case {i + 1}\n"
            f"Input:\n{rc.case.key}\n"
            f"{rc.case.reason}\n"
            f"{RESULT_MARKER} {rc.case.ground_truth}"
        )
    rendered = (
        f"## Task\n{task.prompt_task_description}\n\n"
        f"## Requirement\n{requirement}\n\n"
        f"## Similar error-prone cases\n" + "\n\n".join(case_blocks) + "\n\n"
        f"## Input\n{input_text}\n"
    )
    _check_budget(rendered, max_prompt_tokens)
    return PromptSpec(
        kind=PromptKind.ECR,
        task_description=task.prompt_task_description,
        requirement=requirement,
        cases_or_examples=case_blocks,
        input_text=input_text,
        rendered=rendered,
    )


def build_icl_prompt(
    task: TaskSpec,
    demonstrations: list[LabeledSample],
    input_text: str,
    max_prompt_tokens: int | None = None,
) -> PromptSpec:
    """Baseline prompt: labeled demonstrations without any reasoning text."""
    if not demonstrations:
        raise NoCasesProvided("cannot build a demonstration prompt with zero examples")
    requirement = (
        f"{task.prompt_requirement}\n"
        "The examples below show correct answers for similar inputs.\n"
        f"{_answer_line(task)}"
    )
    demo_blocks = []
    for i, demo in enumerate(demonstrations):
        demo_blocks.append(
            f"### Example {i + 1}\n"
            f"Input:\n{sample_key_text(demo)}\n"
            f"{RESULT_MARKER} {display_label(demo)}"
        )
    rendered = (
        f"## Task\n{task.prompt_task_description}\n\n"
        f"## Requirement\n{requirement}\n\n"
        f"## Examples\n" + "\n\n".join(demo_blocks) + "\n\n"
        f"## Input\n{input_text}\n"
    )
    _check_budget(rendered, max_prompt_tokens)
    return PromptSpec(
        kind=PromptKind.ICL,
        task_description=task.prompt_task_description,
        requirement=requirement,
        cases_or_examples=demo_blocks,
        input_text=input_text,
        rendered=rendered,
    )


_RESULT_RE = re.compile(r"result\s*:\s*", re.IGNORECASE)
_REASON_RE = re.compile(r"reason\s*:\s*", re.IGNORECASE)
_STRIP_CHARS = " \t\"'`.,;:!"


def parse_response(raw_text: str, task: TaskSpec) -> ParsedResponse:
    """Extract the answer from a model reply.

    The last "Result:" marker wins (models often restate the format while
    reasoning); the rest of that line must match a label case-insensitively,
    or a 1-based candidate number for ranking tasks. Anything else raises
    ParseError with the raw text attached so the caller can fall back.
    """
    matches = list(_RESULT_RE.finditer(raw_text))
    if not matches:
        raise ParseError("no result marker in response", raw=raw_text)
    tail = raw_text[matches[-1].end():]
    token = tail.splitlines()[0].strip(_STRIP_CHARS) if tail.strip() else ""
    if not token:
        raise ParseError("result marker with no answer", raw=raw_text)

    reason_text = None
    reasons = list(_REASON_RE.finditer(raw_text, 0, matches[-1].start()))
    if reasons:
        reason_text = raw_text[reasons[-1].end(): matches[-1].start()].strip() or None

    if task.kind == TaskKind.RANKING:
        try:
            position = int(token)
        except ValueError:
            raise ParseError(f"expected a candidate number, got {token!r}", raw=raw_text)
        count = task.candidate_count or 0
        if not 1 <= position <= count:
            raise ParseError(
                f"candidate number {position} outside 1..{count}", raw=raw_text
            )
        return ParsedResponse(label=str(position), reason_text=reason_text, raw=raw_text)

    folded = token.casefold()
    for lab in task.label_space:
        if lab.casefold() == folded:
            return ParsedResponse(label=lab, reason_text=reason_text, raw=raw_text)
    raise ParseError(f"answer {token!r} matches no label", raw=raw_text)

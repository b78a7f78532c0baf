"""Embedding-backed similarity search over the error-case bank.

A query log is embedded, compared against every stored case by cosine
similarity, and the top-k matches come back in ascending similarity
order so the strongest match sits nearest the query inside the prompt.
Banks hold at most a few hundred cases, so a linear scan beats any index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Protocol

import numpy as np

from logcascade.errors import (
    DimensionMismatch,
    EmbedderError,
    EmptyBank,
    EmptyInput,
    ZeroVector,
)
from logcascade.hashing import stable_hash64

if TYPE_CHECKING:
    from logcascade.casebank import CaseBank, ErrorCase

FALLBACK_EMBEDDER_ID = "hashed-char-ngram-256-v1"
FALLBACK_DIMENSION = 256
_CHAR_NGRAM_SIZES = (3, 4)


@dataclass(slots=True)
class EmbeddingVector:
    values: np.ndarray
    dimension: int
    embedder_id: str

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.dimension <= 0 or self.values.shape != (self.dimension,):
            raise DimensionMismatch(
                f"vector shape {self.values.shape} vs declared dimension {self.dimension}"
            )
        if not np.all(np.isfinite(self.values)):
            raise EmbedderError("non-finite entries in embedding")


@dataclass(slots=True)
class RetrievedCase:
    case: "ErrorCase"
    similarity: float


class Embedder(Protocol):
    embedder_id: str
    dimension: int

    def embed(self, text: str) -> EmbeddingVector: ...

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]: ...


class HashedNgramEmbedder:
    """Deterministic fallback embedder: hashed character n-grams.

    Character n-grams (n of 3 and 4) survive the identifier-and-punctuation
    soup of log text where word tokenization falls apart. Short texts are
    wrapped in angle-bracket boundary markers so even one character yields
    at least one trigram.
    """

    embedder_id = FALLBACK_EMBEDDER_ID
    dimension = FALLBACK_DIMENSION

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyInput("cannot embed empty text")
        padded = f"<{text}>"
        vec = np.zeros(self.dimension, dtype=np.float64)
        for n in _CHAR_NGRAM_SIZES:
            for i in range(len(padded) - n + 1):
                gram = padded[i : i + n]
                vec[stable_hash64(gram, namespace="emb") % self.dimension] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:  # unreachable: padding guarantees at least one trigram
            raise EmbedderError(f"degenerate embedding for {text!r}")
        return EmbeddingVector(vec / norm, self.dimension, self.embedder_id)

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    """Client for an external embedding service.

    Wire contract: POST {texts: [str]} and read back {vectors: [[float]]}
    in the same order. The transport callable is injected so tests can
    stay off the network.
    """

    def __init__(
        self,
        post: Callable[[dict], dict],
        dimension: int,
        embedder_id: str,
    ) -> None:
        self.post = post
        self.dimension = dimension
        self.embedder_id = embedder_id

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        for t in texts:
            if not t:
                raise EmptyInput("cannot embed empty text")
        try:
            reply = self.post({"texts": texts})
            vectors = reply["vectors"]
        except EmptyInput:
            raise
        except Exception as exc:
            raise EmbedderError(f"embedding service failed: {exc}") from exc
        if len(vectors) != len(texts):
            raise EmbedderError(
                f"service returned {len(vectors)} vectors for {len(texts)} texts"
            )
        return [
            EmbeddingVector(np.asarray(v, dtype=np.float64), self.dimension, self.embedder_id)
            for v in vectors
        ]


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    if u.dimension != v.dimension:
        raise DimensionMismatch(f"{u.dimension} vs {v.dimension}")
    nu = float(np.linalg.norm(u.values))
    nv = float(np.linalg.norm(v.values))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    return float(np.dot(u.values, v.values) / (nu * nv))


def top_k(query: EmbeddingVector, bank: "CaseBank", k: int = 5) -> list[RetrievedCase]:
    """The k most similar unflagged cases, ascending by similarity.

    Ascending order puts the best match last, adjacent to the query text
    in the assembled prompt. Ties go to the earlier-inserted case.
    """
    cases = bank.active_cases()
    if not cases:
        raise EmptyBank("no unflagged cases to retrieve from")
    scored = [
        (cosine(query, case.embedding), idx, case) for idx, case in enumerate(cases)
    ]
    # Highest similarity first for selection; insertion order breaks ties.
    scored.sort(key=lambda t: (-t[0], t[1]))
    chosen = scored[:k]
    # Ascending for presentation: least similar first, ties earlier-first.
    chosen.sort(key=lambda t: (t[0], t[1]))
    return [RetrievedCase(case=case, similarity=sim) for sim, _, case in chosen]

"""Embedding fallback, cosine, and top-k retrieval order."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pytest

from logcascade.errors import (
    DimensionMismatch,
    EmbedderError,
    EmptyBank,
    EmptyInput,
    ZeroVector,
)
from logcascade.retrieval import (
    FALLBACK_DIMENSION,
    EmbeddingVector,
    HashedNgramEmbedder,
    RemoteEmbedder,
    cosine,
    top_k,
)


@dataclass(slots=True)
class StubCase:
    embedding: EmbeddingVector
    name: str = ""


@dataclass(slots=True)
class StubBank:
    cases: list[StubCase] = field(default_factory=list)

    def active_cases(self) -> list[StubCase]:
        return self.cases


def vec(*values: float) -> EmbeddingVector:
    arr = np.asarray(values, dtype=np.float64)
    return EmbeddingVector(arr, len(values), "test")


class TestFallbackEmbedder:
    def test_identical_texts_identical_vectors(self):
        e = HashedNgramEmbedder()
        a = e.embed("disk full on /dev/sda1")
        b = e.embed("disk full on /dev/sda1")
        assert np.array_equal(a.values, b.values)

    def test_unit_norm(self):
        e = HashedNgramEmbedder()
        v = e.embed("kernel panic at 03:14")
        assert np.linalg.norm(v.values) == pytest.approx(1.0, abs=1e-9)
        assert v.dimension == FALLBACK_DIMENSION

    def test_disjoint_alphabets_orthogonal(self):
        e = HashedNgramEmbedder()
        assert cosine(e.embed("abc"), e.embed("xyz")) == 0.0

    def test_single_character_embeddable(self):
        e = HashedNgramEmbedder()
        v = e.embed("x")
        assert np.linalg.norm(v.values) == pytest.approx(1.0, abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            HashedNgramEmbedder().embed("")

    def test_batch_matches_single(self):
        e = HashedNgramEmbedder()
        batch = e.embed_batch(["alpha", "beta"])
        assert np.array_equal(batch[0].values, e.embed("alpha").values)
        assert np.array_equal(batch[1].values, e.embed("beta").values)


class TestRemoteEmbedder:
    def test_order_preserving_wire_contract(self):
        calls = []

        def fake_post(body):
            calls.append(body)
            return {"vectors": [[1.0, 0.0], [0.0, 1.0]]}

        e = RemoteEmbedder(fake_post, dimension=2, embedder_id="svc-v1")
        out = e.embed_batch(["first", "second"])
        assert calls == [{"texts": ["first", "second"]}]
        assert out[0].values.tolist() == [1.0, 0.0]
        assert out[1].values.tolist() == [0.0, 1.0]
        assert out[0].embedder_id == "svc-v1"

    def test_service_failure_wrapped(self):
        def failing_post(body):
            raise ConnectionError("boom")

        e = RemoteEmbedder(failing_post, dimension=2, embedder_id="svc-v1")
        with pytest.raises(EmbedderError):
            e.embed("text")

    def test_count_mismatch_rejected(self):
        e = RemoteEmbedder(lambda b: {"vectors": [[1.0, 0.0]]}, dimension=2, embedder_id="s")
        with pytest.raises(EmbedderError):
            e.embed_batch(["a", "b"])

    def test_empty_text_rejected_before_send(self):
        e = RemoteEmbedder(lambda b: {"vectors": []}, dimension=2, embedder_id="s")
        with pytest.raises(EmptyInput):
            e.embed("")


class TestCosine:
    def test_self_similarity(self):
        v = vec(0.3, 0.4, 0.5)
        assert cosine(v, v) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine(vec(1, 0), vec(0, 1)) == 0.0

    def test_hand_value(self):
        assert cosine(vec(1, 0), vec(1, 1)) == pytest.approx(0.70710678, abs=1e-8)

    def test_symmetry_and_scale_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = EmbeddingVector(rng.normal(size=8), 8, "t")
            b = EmbeddingVector(rng.normal(size=8), 8, "t")
            assert cosine(a, b) == pytest.approx(cosine(b, a))
            scaled = EmbeddingVector(a.values * 7.5, 8, "t")
            assert cosine(scaled, b) == pytest.approx(cosine(a, b))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine(vec(1, 0), vec(1, 0, 0))

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine(vec(0, 0), vec(1, 0))


class TestTopK:
    def make_bank(self, sims_to_query: list[float]) -> tuple[EmbeddingVector, StubBank]:
        # 2-d construction: query (1,0); case with target similarity s is
        # (s, sqrt(1-s^2)), exact enough for ordering checks
        query = vec(1.0, 0.0)
        cases = []
        for i, s in enumerate(sims_to_query):
            cases.append(StubCase(vec(s, float(np.sqrt(1 - s * s))), name=f"c{i}"))
        return query, StubBank(cases)

    def test_worked_example(self):
        query, bank = self.make_bank([0.9, 0.3, 0.7])  # A, B, C
        out = top_k(query, bank, k=2)
        assert [c.case.name for c in out] == ["c2", "c0"]
        assert out[0].similarity == pytest.approx(0.7)
        assert out[1].similarity == pytest.approx(0.9)

    def test_k_exceeds_bank(self):
        query, bank = self.make_bank([0.5, 0.1])
        out = top_k(query, bank, k=10)
        assert [c.case.name for c in out] == ["c1", "c0"]

    def test_ascending_similarity(self):
        rng = np.random.default_rng(11)
        query, bank = self.make_bank(list(rng.uniform(-0.9, 0.9, size=30)))
        out = top_k(query, bank, k=5)
        sims = [c.similarity for c in out]
        assert sims == sorted(sims)

    def test_exact_tie_earlier_inserted_first(self):
        query, bank = self.make_bank([0.5, 0.5, 0.9])
        out = top_k(query, bank, k=3)
        assert [c.case.name for c in out] == ["c0", "c1", "c2"]

    def test_tie_at_selection_boundary_prefers_earlier(self):
        query, bank = self.make_bank([0.5, 0.9, 0.5])
        out = top_k(query, bank, k=2)
        assert [c.case.name for c in out] == ["c0", "c1"]

    def test_empty_bank_rejected(self):
        with pytest.raises(EmptyBank):
            top_k(vec(1.0, 0.0), StubBank([]), k=5)

    def test_brute_force_equivalence_random_banks(self):
        rng = np.random.default_rng(2024)
        for _ in range(25):
            dim = 16
            n = int(rng.integers(1, 60))
            k = int(rng.integers(1, 11))
            vectors = rng.normal(size=(n, dim))
            bank = StubBank([
                StubCase(EmbeddingVector(vectors[i], dim, "t"), name=str(i)) for i in range(n)
            ])
            query = EmbeddingVector(rng.normal(size=dim), dim, "t")
            got = top_k(query, bank, k=k)
            sims = [cosine(query, c.embedding) for c in bank.cases]
            expect = sorted(range(n), key=lambda i: (-sims[i], i))[:k]
            assert sorted(c.case.name for c in got) == sorted(str(i) for i in expect)
            out_sims = [c.similarity for c in got]
            assert out_sims == sorted(out_sims)

"""Chunking, embedding, retrieval, routing, persistence, web search."""

import random

import numpy as np
import pytest

from svworkbench.errors import ParameterError, SearchUnavailable
from svworkbench.knowledge import (
    EmbeddingVector,
    KnowledgeChunk,
    MockWebSearch,
    VectorStore,
    build_store,
    build_stores_from_manifest,
    cosine,
    embed,
    ingest,
    load_store,
    reconstruct,
    route_domain,
    save_store,
    search,
    slugify,
    web_search,
)


class TestIngest:
    def test_ten_tokens_size4_overlap1(self):
        """Oracle: hand-enumerated greedy walk [0..3],[3..6],[6..9],[9]."""
        doc = " ".join(f"t{i}" for i in range(10))
        chunks = ingest(doc, "d", chunk_size=4, overlap=1)
        texts = [c.text.split() for c in chunks]
        assert texts == [
            ["t0", "t1", "t2", "t3"],
            ["t3", "t4", "t5", "t6"],
            ["t6", "t7", "t8", "t9"],
            ["t9"],
        ]
        assert [c.ordinal for c in chunks] == [0, 1, 2, 3]

    def test_short_doc_single_chunk(self):
        chunks = ingest("one two three", "d", chunk_size=10, overlap=2)
        assert len(chunks) == 1
        assert chunks[0].text == "one two three"

    def test_overlap_ge_size_rejected(self):
        with pytest.raises(ParameterError):
            ingest("a b c", "d", chunk_size=4, overlap=4)

    def test_empty_doc_empty_list(self):
        assert ingest("", "d") == []

    def test_lossless_random_documents(self):
        """Reconstruction inverts ingest for 100 random docs."""
        rng = random.Random(99)
        for i in range(100):
            n = rng.randrange(1, 120)
            size = rng.randrange(2, 20)
            overlap = rng.randrange(0, size)
            doc = " ".join(f"w{rng.randrange(50)}" for _ in range(n))
            chunks = ingest(doc, f"d{i}", chunk_size=size, overlap=overlap)
            assert reconstruct(chunks, overlap) == doc


class TestEmbed:
    def test_deterministic(self):
        a = embed("clock glitch attack")
        b = embed("clock glitch attack")
        assert np.array_equal(a.values, b.values)

    def test_empty_text_zero_vector(self):
        v = embed("")
        assert v.is_zero
        assert v.dims == 512

    def test_normalized(self):
        v = embed("hardware security verification workbench")
        assert abs(np.linalg.norm(v.values) - 1.0) <= 1e-6

    def test_related_text_closer_than_unrelated(self):
        """Oracle: direct cosine computation with the reference embedder."""
        base = embed("clock glitch attack")
        related = embed("clock glitch attack injection")
        unrelated = embed("pasta recipe")
        assert cosine(base, related) > cosine(base, unrelated)


def brute_force_topk(entries, query, k):
    """Independent oracle: full sort of per-row dot products."""
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn > 0:
        q = q / qn
    scored = []
    for chunk_id, vec in entries:
        score = float(np.dot(np.asarray(vec, dtype=np.float64), q))
        scored.append((chunk_id, min(1.0, max(-1.0, score))))
    return sorted(scored, key=lambda item: (-item[1], item[0]))[:k]


def random_store(rng, n, dims):
    store = VectorStore(f"s{rng.randrange(1000)}", "random")
    for i in range(n):
        raw = np.array([rng.gauss(0, 1) for _ in range(dims)])
        norm = np.linalg.norm(raw)
        vec = raw / norm if norm > 0 else raw
        chunk = KnowledgeChunk(f"c{i:04d}", "doc", i, f"chunk {i}", 2)
        store.add(chunk, EmbeddingVector(vec))
    return store


class TestSearch:
    def test_self_similarity_scores_one(self):
        store = build_store("s", "d", ingest("alpha beta gamma delta", "x", 2, 0))
        target = store.entries()[1][1]
        hits = search(store, EmbeddingVector(target.copy()), 1)
        assert hits[0][0] == "x:0001"
        assert abs(hits[0][1] - 1.0) <= 1e-9

    def test_k_larger_than_store(self):
        store = build_store("s", "d", ingest("a b c d", "x", 1, 0))
        hits = search(store, embed("a"), 50)
        assert len(hits) == 4
        assert hits == sorted(hits, key=lambda h: (-h[1], h[0]))

    def test_empty_store(self):
        assert search(VectorStore("s"), embed("q"), 3) == []

    def test_k_zero_rejected(self):
        with pytest.raises(ParameterError):
            search(VectorStore("s"), embed("q"), 0)

    def test_random_50_chunks_matches_bruteforce(self):
        rng = random.Random(5)
        store = random_store(rng, 50, 16)
        q = np.array([rng.gauss(0, 1) for _ in range(16)])
        hits = search(store, EmbeddingVector(q), 5)
        assert hits == brute_force_topk(store.entries(), q, 5)

    def test_oracle_equivalence_200_random_stores(self):
        """Exact rank agreement with the brute-force oracle, tie rule included."""
        rng = random.Random(2024)
        for trial in range(200):
            dims = rng.choice([4, 8, 16, 32])
            n = rng.randrange(1, 60)
            store = random_store(rng, n, dims)
            if trial % 7 == 0:  # exercise the tie rule with duplicated vectors
                base = store.entries()[0][1]
                dup = KnowledgeChunk("c9999", "doc", n, "dup", 1)
                store.add(dup, EmbeddingVector(base.copy()))
            k = rng.randrange(1, 20)
            q = np.array([rng.gauss(0, 1) for _ in range(dims)])
            assert search(store, EmbeddingVector(q), k) == \
                brute_force_topk(store.entries(), q, k)

    def test_scores_within_bounds(self):
        rng = random.Random(8)
        store = random_store(rng, 30, 8)
        for _ in range(20):
            q = np.array([rng.gauss(0, 1) for _ in range(8)])
            for _, score in search(store, EmbeddingVector(q), 30):
                assert -1.0 <= score <= 1.0

    def test_dims_mismatch(self):
        store = build_store("s", "d", ingest("a b", "x", 1, 0))
        with pytest.raises(ParameterError):
            search(store, EmbeddingVector(np.zeros(7)), 1)


class TestRouteDomain:
    def test_single_store(self):
        store = build_store("only", "d", ingest("alpha beta", "x", 2, 0))
        assert route_domain("anything", [store]) == "only"

    def test_verbatim_query_routes_to_matching_store(self):
        a = build_store("a", "fuzzing", ingest("hardware fuzzing coverage mutation", "da", 4, 0))
        b = build_store("b", "cooking", ingest("pasta sauce basil tomato", "db", 4, 0))
        assert route_domain("hardware fuzzing coverage mutation", [a, b]) == "a"
        assert route_domain("pasta sauce basil tomato", [a, b]) == "b"

    def test_identical_stores_tie_by_id(self):
        chunks = ingest("alpha beta gamma", "x", 3, 0)
        s1 = build_store("zeta", "d", chunks)
        s2 = build_store("alpha", "d", chunks)
        assert route_domain("alpha beta", [s1, s2]) == "alpha"

    def test_reorder_invariance(self):
        rng = random.Random(3)
        texts = [f"token{rng.randrange(20)} token{rng.randrange(20)}" for _ in range(30)]
        chunks = [KnowledgeChunk(f"c{i:03d}", "d", i, t, 2) for i, t in enumerate(texts)]
        forward = VectorStore("s", "d")
        backward = VectorStore("s", "d")
        for c in chunks:
            forward.add(c, embed(c.text))
        for c in reversed(chunks):
            backward.add(c, embed(c.text))
        q = embed("token1 token2")
        assert float(np.dot(forward.centroid(), q.values)) == \
            float(np.dot(backward.centroid(), q.values))

    def test_no_stores_rejected(self):
        with pytest.raises(ParameterError):
            route_domain("q", [])


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        store = build_store("kb", "fuzzing docs", ingest("alpha beta gamma delta epsilon",
                                                         "doc", 2, 1))
        save_store(store, tmp_path)
        loaded = load_store(tmp_path / "kb")
        assert loaded.store_id == "kb"
        assert loaded.domain_label == "fuzzing docs"
        assert len(loaded) == len(store)
        assert {c for c in loaded.chunks} == {c for c in store.chunks}
        q = embed("alpha beta")
        assert [cid for cid, _ in search(loaded, q, 3)] == \
            [cid for cid, _ in search(store, q, 3)]

    def test_loaded_vectors_renormalized(self, tmp_path):
        store = build_store("kb", "d", ingest("one two three", "doc", 2, 0))
        save_store(store, tmp_path)
        loaded = load_store(tmp_path / "kb")
        for _, vec in loaded.entries():
            assert abs(np.linalg.norm(vec) - 1.0) <= 1e-9

    def test_manifest_build(self, tmp_path):
        (tmp_path / "a.md").write_text("fuzzing coverage mutation engine")
        (tmp_path / "b.md").write_text("formal model checking proofs")
        manifest = tmp_path / "manifest.json"
        manifest.write_text(
            '[{"path": "a.md", "domain_label": "Fuzzing"},'
            ' {"path": "b.md", "domain_label": "Formal Methods"}]'
        )
        stores = build_stores_from_manifest(manifest, tmp_path / "stores")
        assert {s.store_id for s in stores} == {"fuzzing", "formal-methods"}
        reloaded = load_store(tmp_path / "stores" / "fuzzing")
        assert len(reloaded) >= 1


class TestWebSearch:
    def test_mock_fixture_replay(self, tmp_path):
        fixture = tmp_path / f"{slugify('hardware fuzzing')}.tsv"
        fixture.write_text(
            "RFUZZ paper\thttps://example.org/rfuzz\tcoverage directed fuzzing\n"
            "TheHuzz\thttps://example.org/thehuzz\tprocessor fuzzing\n"
            "SoCFuzzer\thttps://example.org/socfuzzer\tsoc security fuzzing\n"
        )
        results = web_search("hardware fuzzing", MockWebSearch(tmp_path))
        assert len(results) == 3
        assert results[0].title == "RFUZZ paper"

    def test_unconfigured_adapter(self):
        with pytest.raises(SearchUnavailable):
            web_search("anything", None)

    def test_empty_query(self, tmp_path):
        with pytest.raises(ParameterError):
            web_search("  ", MockWebSearch(tmp_path))

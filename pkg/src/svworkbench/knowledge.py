"""RAG substrate: chunking, the reference embedder, vector stores, routing.

The reference embedder is a hashed bag-of-words (512 buckets, L2
normalized). It is a deliberate dependency-free stand-in: deterministic,
cheap enough for exact brute-force oracles, and separable on desk-scale
vocabularies. A remote embedding backend can be dropped in behind the same
``embed``-shaped callable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, SearchUnavailable

logger = logging.getLogger(__name__)

EMBED_DIMS = 512
DEFAULT_CHUNK_SIZE = 256
DEFAULT_OVERLAP = 32


@dataclass
class KnowledgeChunk:
    chunk_id: str
    source_doc: str
    ordinal: int
    text: str
    token_estimate: int

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "source_doc": self.source_doc,
            "ordinal": self.ordinal,
            "text": self.text,
            "token_estimate": self.token_estimate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeChunk":
        return cls(d["chunk_id"], d["source_doc"], d["ordinal"], d["text"], d["token_estimate"])


@dataclass
class EmbeddingVector:
    values: np.ndarray

    @property
    def dims(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


def ingest(
    doc: str,
    source_id: str,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> list[KnowledgeChunk]:
    """Greedy fixed-size chunking on whitespace-token boundaries.

    Consecutive chunks share ``overlap`` tokens; the last chunk may be
    short. An empty document yields an empty list.
    """
    if overlap < 0 or overlap >= chunk_size:
        raise ParameterError(f"overlap {overlap} must satisfy 0 <= overlap < chunk_size {chunk_size}")
    tokens = doc.split()
    if not tokens:
        return []
    stride = chunk_size - overlap
    chunks = []
    for ordinal, start in enumerate(range(0, len(tokens), stride)):
        piece = tokens[start : start + chunk_size]
        chunks.append(
            KnowledgeChunk(
                chunk_id=f"{source_id}:{ordinal:04d}",
                source_doc=source_id,
                ordinal=ordinal,
                text=" ".join(piece),
                token_estimate=len(piece),
            )
        )
    return chunks


def reconstruct(chunks: list[KnowledgeChunk], overlap: int) -> str:
    """Overlap-aware concatenation; inverse of ingest up to whitespace."""
    ordered = sorted(chunks, key=lambda c: c.ordinal)
    tokens: list[str] = []
    for i, chunk in enumerate(ordered):
        piece = chunk.text.split()
        if i > 0:
            piece = piece[min(overlap, len(piece)):]
        tokens.extend(piece)
    return " ".join(tokens)


def _bucket(token: str, dims: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dims


def embed(text: str, dims: int = EMBED_DIMS) -> EmbeddingVector:
    """Hashed bag-of-words reference embedder; deterministic across runs."""
    values = np.zeros(dims, dtype=np.float64)
    for token in text.lower().split():
        values[_bucket(token, dims)] += 1.0
    norm = np.linalg.norm(values)
    if norm > 0:
        values /= norm
    return EmbeddingVector(values)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    na = np.linalg.norm(a.values)
    nb = np.linalg.norm(b.values)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a.values / na, b.values / nb))


class VectorStore:
    """Immutable-after-build store of (chunk, embedding) pairs."""

    def __init__(self, store_id: str, domain_label: str = ""):
        self.store_id = store_id
        self.domain_label = domain_label or store_id
        self.chunks: dict[str, KnowledgeChunk] = {}
        self._entries: list[tuple[str, np.ndarray]] = []
        self.dims: int | None = None
        self._centroid: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, chunk: KnowledgeChunk, vector: EmbeddingVector) -> None:
        if chunk.chunk_id in self.chunks:
            raise ParameterError(f"duplicate chunk_id {chunk.chunk_id!r}")
        if self.dims is None:
            self.dims = vector.dims
        elif vector.dims != self.dims:
            raise ParameterError(f"vector dims {vector.dims} != store dims {self.dims}")
        self.chunks[chunk.chunk_id] = chunk
        self._entries.append((chunk.chunk_id, np.asarray(vector.values, dtype=np.float64)))
        self._centroid = None

    def entries(self) -> list[tuple[str, np.ndarray]]:
        return list(self._entries)

    def centroid(self) -> np.ndarray:
        """Normalized mean of entries, computed over a canonical (sorted)
        entry order so it is invariant to insertion order."""
        if self._centroid is None:
            if not self._entries:
                self._centroid = np.zeros(self.dims or EMBED_DIMS, dtype=np.float64)
            else:
                ordered = sorted(self._entries, key=lambda e: e[0])
                mean = np.mean(np.stack([v for _, v in ordered]), axis=0)
                norm = np.linalg.norm(mean)
                self._centroid = mean / norm if norm > 0 else mean
        return self._centroid


def build_store(
    store_id: str,
    domain_label: str,
    chunks: list[KnowledgeChunk],
    embedder=embed,
) -> VectorStore:
    store = VectorStore(store_id, domain_label)
    for chunk in chunks:
        vector = embedder(chunk.text)
        if vector.is_zero:
            logger.warning("chunk %s embeds to zero vector; not retrievable", chunk.chunk_id)
        store.add(chunk, vector)
    return store


def search(store: VectorStore, query_vector: EmbeddingVector, k: int) -> list[tuple[str, float]]:
    """Exact top-k by cosine, descending; ties broken by chunk_id ascending."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    if len(store) == 0:
        return []
    if store.dims is not None and query_vector.dims != store.dims:
        raise ParameterError(f"query dims {query_vector.dims} != store dims {store.dims}")
    q = np.asarray(query_vector.values, dtype=np.float64)
    qnorm = np.linalg.norm(q)
    if qnorm > 0:
        q = q / qnorm
    scored = []
    for chunk_id, vec in store.entries():
        score = float(np.dot(vec, q))
        score = min(1.0, max(-1.0, score))
        scored.append((chunk_id, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def route_domain(query: str, stores: list[VectorStore], embedder=embed) -> str:
    """Pick the store whose centroid is most cosine-similar to the query."""
    if not stores:
        raise ParameterError("route_domain needs at least one store")
    q = embedder(query).values
    qnorm = np.linalg.norm(q)
    if qnorm > 0:
        q = q / qnorm
    best_id, best_score = None, -2.0
    for store in sorted(stores, key=lambda s: s.store_id):
        score = float(np.dot(store.centroid(), q))
        if score > best_score:
            best_id, best_score = store.store_id, score
    return best_id


# ---------------------------------------------------------------------------
# persistence: chunks.ndjson + vectors.f32 (row-major little-endian) + meta.json


def save_store(store: VectorStore, base_dir: str | Path) -> Path:
    base = Path(base_dir)
    final_dir = base / store.store_id
    tmp_dir = base / f".{store.store_id}.tmp"
    if tmp_dir.exists():
        for p in tmp_dir.iterdir():
            p.unlink()
    tmp_dir.mkdir(parents=True, exist_ok=True)

    ids = [cid for cid, _ in store.entries()]
    with (tmp_dir / "chunks.ndjson").open("w", encoding="utf-8") as fh:
        for cid in ids:
            fh.write(json.dumps(store.chunks[cid].to_dict(), sort_keys=True) + "\n")
    if store.entries():
        matrix = np.stack([v for _, v in store.entries()]).astype("<f4")
    else:
        matrix = np.zeros((0, store.dims or EMBED_DIMS), dtype="<f4")
    (tmp_dir / "vectors.f32").write_bytes(matrix.tobytes(order="C"))
    meta = {
        "store_id": store.store_id,
        "domain_label": store.domain_label,
        "dims": store.dims or EMBED_DIMS,
        "count": len(store),
    }
    (tmp_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")

    if final_dir.exists():
        import shutil

        shutil.rmtree(final_dir)
    os.replace(tmp_dir, final_dir)
    return final_dir


def load_store(store_dir: str | Path) -> VectorStore:
    store_dir = Path(store_dir)
    meta = json.loads((store_dir / "meta.json").read_text(encoding="utf-8"))
    store = VectorStore(meta["store_id"], meta["domain_label"])
    dims = meta["dims"]
    raw = (store_dir / "vectors.f32").read_bytes()
    matrix = np.frombuffer(raw, dtype="<f4").reshape(meta["count"], dims).astype(np.float64)
    with (store_dir / "chunks.ndjson").open(encoding="utf-8") as fh:
        for row, line in zip(matrix, fh):
            chunk = KnowledgeChunk.from_dict(json.loads(line))
            norm = np.linalg.norm(row)
            vec = row / norm if norm > 0 else row
            store.add(chunk, EmbeddingVector(vec))
    return store


def load_all_stores(base_dir: str | Path) -> dict[str, VectorStore]:
    base = Path(base_dir)
    stores = {}
    if base.is_dir():
        for child in sorted(base.iterdir()):
            if (child / "meta.json").is_file():
                store = load_store(child)
                stores[store.store_id] = store
    return stores


def slugify(text: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")
    return slug or "query"


def build_stores_from_manifest(manifest_path: str | Path, out_dir: str | Path,
                               chunk_size: int = DEFAULT_CHUNK_SIZE,
                               overlap: int = DEFAULT_OVERLAP) -> list[VectorStore]:
    """Manifest: JSON list of {"path": ..., "domain_label": ...} records."""
    manifest_path = Path(manifest_path)
    records = json.loads(manifest_path.read_text(encoding="utf-8"))
    by_domain: dict[str, list[Path]] = {}
    for record in records:
        by_domain.setdefault(record["domain_label"], []).append(
            (manifest_path.parent / record["path"]).resolve()
        )
    stores = []
    for domain, paths in sorted(by_domain.items()):
        chunks: list[KnowledgeChunk] = []
        for path in paths:
            chunks.extend(ingest(path.read_text(encoding="utf-8"), path.stem, chunk_size, overlap))
        store = build_store(slugify(domain), domain, chunks)
        save_store(store, out_dir)
        stores.append(store)
    return stores


# ---------------------------------------------------------------------------
# web search adapter


@dataclass
class SearchResult:
    title: str
    url: str
    snippet: str


class MockWebSearch:
    """Replays search fixtures: ``search_fixtures/<slug>.tsv`` with
    title/url/snippet tab-separated columns."""

    def __init__(self, fixtures_dir: str | Path):
        self.fixtures_dir = Path(fixtures_dir)

    def search(self, query: str) -> list[SearchResult]:
        path = self.fixtures_dir / f"{slugify(query)}.tsv"
        if not path.is_file():
            return []
        results = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) >= 3:
                results.append(SearchResult(cols[0], cols[1], cols[2]))
        return results


def web_search(query: str, adapter=None) -> list[SearchResult]:
    """Pass-through to the configured adapter; callers degrade to
    store-only retrieval when none is configured."""
    if not query or not query.strip():
        raise ParameterError("empty search query")
    if adapter is None:
        raise SearchUnavailable("no web search adapter configured")
    return adapter.search(query)

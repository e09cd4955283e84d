"""Embedding vectors for responses.

Two providers: a file-backed store for vectors produced offline by external
embedding models, and a built-in deterministic hashed character-3-gram
embedder so the pipeline runs end-to-end without model inference. Also the
cosine-similarity primitive and the zero-vector similarity convention used
by selection and metrics.
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterable

import numpy as np

from .kernels import pairwise_sim_sum

__all__ = [
    "EmbeddingError",
    "cosine_similarity",
    "similarity",
    "normalize_rows",
    "mean_pairwise_similarity",
    "hashed_ngram_embed",
    "text_hash",
    "EmbeddingStore",
    "HashedNgramProvider",
    "load_embeddings",
    "write_embeddings",
]


class EmbeddingError(ValueError):
    """Invalid embedding input or store."""


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (|a| |b|). Errors on dimension mismatch or zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine similarity undefined for zero-norm input")
    return float(np.dot(a, b) / (na * nb))


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity under the pipeline convention: a zero vector is
    maximally dissimilar to everything (similarity 0)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if float(np.linalg.norm(a)) == 0.0 or float(np.linalg.norm(b)) == 0.0:
        return 0.0
    return cosine_similarity(a, b)


def normalize_rows(vectors: Iterable[np.ndarray]) -> np.ndarray:
    """Stack vectors into a C-contiguous unit-norm matrix; zero rows stay
    zero so plain dot products realize the zero-vector convention."""
    mat = np.ascontiguousarray(np.stack([np.asarray(v) for v in vectors]), dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return np.ascontiguousarray(mat / norms)


def mean_pairwise_similarity(vectors: Iterable[np.ndarray]) -> float:
    """Mean similarity over all unordered pairs (zero-vector convention)."""
    mat = normalize_rows(vectors)
    n = mat.shape[0]
    if n < 2:
        raise EmbeddingError("need at least 2 vectors")
    return pairwise_sim_sum(mat) / (n * (n - 1) / 2.0)


def _gram_hash(gram: str) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def hashed_ngram_embed(text: str, dim: int = 256) -> np.ndarray:
    """Deterministic hashed character-3-gram embedding, L2-normalized.

    Each 3-gram of the lowercased text adds +/-1 (sign from the hash's top
    bit) to bucket hash % dim. Non-empty texts shorter than 3 characters
    are embedded as a single whole-text gram so only the empty text maps
    to the zero vector.
    """
    if dim < 64 or dim & (dim - 1):
        raise EmbeddingError(f"dim must be a power of two >= 64, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    lowered = text.lower()
    if not lowered:
        return vec
    grams = (
        [lowered[i : i + 3] for i in range(len(lowered) - 2)]
        if len(lowered) >= 3
        else [lowered]
    )
    for gram in grams:
        h = _gram_hash(gram)
        sign = 1.0 if (h >> 63) & 1 else -1.0
        vec[h % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def text_hash(text: str) -> str:
    """Portable response-content key: SHA-256 hex of the exact text bytes."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingStore:
    """Lookup from (question_id, text) to an embedding vector."""

    def __init__(self, dim: int):
        self.dim = dim
        self._table: dict[tuple[str, str], np.ndarray] = {}

    def put(self, question_id: str, thash: str, vector: np.ndarray) -> None:
        key = (question_id, thash)
        if key in self._table:
            raise EmbeddingError(f"duplicate embedding key {key}")
        self._table[key] = np.asarray(vector, dtype=np.float64)

    def vector_for(self, question_id: str, text: str) -> np.ndarray:
        key = (question_id, text_hash(text))
        try:
            return self._table[key]
        except KeyError:
            raise EmbeddingError(f"no embedding for key {key}") from None

    def has(self, question_id: str, text: str) -> bool:
        return (question_id, text_hash(text)) in self._table

    def __len__(self) -> int:
        return len(self._table)


class HashedNgramProvider(EmbeddingStore):
    """Store that computes hashed-3-gram vectors on demand and caches them."""

    def vector_for(self, question_id: str, text: str) -> np.ndarray:
        key = (question_id, text_hash(text))
        vec = self._table.get(key)
        if vec is None:
            vec = hashed_ngram_embed(text, self.dim)
            self._table[key] = vec
        return vec

    def has(self, question_id: str, text: str) -> bool:
        return True


def load_embeddings(path) -> EmbeddingStore:
    """Load an embeddings JSONL file (question_id, text_hash, vector)."""
    store: EmbeddingStore | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                qid = str(obj["question_id"])
                thash = str(obj["text_hash"])
                vector = np.asarray(obj["vector"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise EmbeddingError(f"{path}: malformed embedding line {lineno}: {exc}") from exc
            if vector.ndim != 1:
                raise EmbeddingError(f"{path}: vector at line {lineno} is not 1-D")
            if not np.all(np.isfinite(vector)):
                raise EmbeddingError(f"{path}: non-finite vector at line {lineno}")
            if store is None:
                store = EmbeddingStore(dim=vector.shape[0])
            elif vector.shape[0] != store.dim:
                raise EmbeddingError(
                    f"{path}: ragged dimensions at line {lineno}: "
                    f"got {vector.shape[0]}, expected {store.dim}"
                )
            try:
                store.put(qid, thash, vector)
            except EmbeddingError as exc:
                raise EmbeddingError(f"{path}: line {lineno}: {exc}") from exc
    if store is None:
        raise EmbeddingError(f"{path}: empty embedding store")
    return store


def write_embeddings(path, rows: Iterable[tuple[str, str, np.ndarray]]) -> None:
    """Write (question_id, text_hash, vector) rows as JSONL, sorted by key
    for byte-stable output."""
    ordered = sorted(rows, key=lambda r: (r[0], r[1]))
    with open(path, "w", encoding="utf-8") as fh:
        for qid, thash, vec in ordered:
            obj = {"question_id": qid, "text_hash": thash, "vector": [float(x) for x in vec]}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")

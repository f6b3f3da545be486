"""Document embeddings: deterministic hashing embedder, pooling, persistence.

Embedding vectors are plain float32 numpy arrays, unit L2 norm. The trained
encoders live out of process; externally produced vectors come in through
``import_precomputed`` while ``HashingTextEmbedder`` provides a deterministic
in-process substitute for tests and demos.
"""

from __future__ import annotations

import csv
import hashlib
import re
import struct
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import Document, build_model_input

UNIT_NORM_ATOL = 1e-6
DEFAULT_DIM = 768

STORE_MAGIC = b"SPSIM1\0"

_TOKEN_RE = re.compile(r"[0-9a-z]+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


class EmbeddingError(ValueError):
    """Invalid embedding input or store payload."""


class StoreFormatError(EmbeddingError):
    """Embedding store file does not match the binary format."""


def _check_vector(values, dim: int | None = None) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float32)
    if vec.ndim != 1:
        raise EmbeddingError(f"embedding must be 1-dimensional, got shape {vec.shape}")
    if dim is not None and vec.shape[0] != dim:
        raise EmbeddingError(f"embedding has dim {vec.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError("embedding contains NaN or Inf")
    return vec


def normalize(values) -> np.ndarray:
    """L2-normalize to unit length; zero vectors are an error."""
    vec = _check_vector(values)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EmbeddingError("cannot normalize a zero vector")
    return (vec / norm).astype(np.float32)


def _token_hash(token: str, seed: int) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


class HashingTextEmbedder(BaseEstimator, TransformerMixin):
    """Signed feature-hashing text embedder, deterministic for a fixed seed.

    Stateless sklearn-style transformer: lowercase tokens are hashed to a
    coordinate and a sign, signed counts accumulate, the result is
    L2-normalized. ``transform`` maps a sequence of texts to a (n, dim)
    float32 matrix of unit rows.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def fit(self, X=None, y=None):
        if self.dim < 2:
            raise EmbeddingError(f"dim must be >= 2, got {self.dim}")
        return self

    def embed(self, text: str) -> np.ndarray:
        self.fit()
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            raise EmbeddingError("empty token stream")
        acc = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            h = _token_hash(token, self.seed)
            sign = 1.0 if h & (1 << 63) else -1.0
            acc[h % self.dim] += sign
        return normalize(acc)

    def transform(self, X: Sequence[str]) -> np.ndarray:
        self.fit()
        if len(X) == 0:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.embed(text) for text in X])

    def __call__(self, text: str) -> np.ndarray:
        return self.embed(text)


def toy_embed(text: str, seed: int, dim: int) -> np.ndarray:
    """One-shot hashing embedding of a text (see HashingTextEmbedder)."""
    return HashingTextEmbedder(dim=dim, seed=seed).embed(text)


def split_sentences(text: str) -> list[str]:
    """Sentence boundaries: '.', '!' or '?' followed by whitespace."""
    return [s for s in _SENTENCE_SPLIT_RE.split(text) if s.strip()]


def embed_document(
    doc: Document,
    pooling: str,
    embedder: Callable[[str], np.ndarray],
    separator: str = "[SEP]",
) -> np.ndarray:
    """Embed one document under "cls" (whole text) or "mean" (per-sentence) pooling."""
    if pooling not in ("cls", "mean"):
        raise EmbeddingError(f"pooling must be 'cls' or 'mean', got {pooling!r}")
    text = build_model_input(doc, separator=separator)
    if pooling == "cls":
        return normalize(embedder(text))
    sentences = split_sentences(text)
    if not sentences:
        raise EmbeddingError(f"document {doc.id!r}: no sentences to pool")
    vectors = np.stack([np.asarray(embedder(s), dtype=np.float32) for s in sentences])
    mean = vectors.mean(axis=0)
    if float(np.linalg.norm(mean)) == 0.0:
        raise EmbeddingError(f"document {doc.id!r}: sentence embeddings cancel to zero")
    return normalize(mean)


class EmbeddingStore:
    """Persistent id -> unit-vector map with a fixed dimension."""

    def __init__(self, dim: int, provenance: str = ""):
        if dim <= 0:
            raise EmbeddingError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.provenance = provenance
        self._vectors: dict[str, np.ndarray] = {}

    def add(self, doc_id: str, values) -> None:
        if doc_id in self._vectors:
            raise EmbeddingError(f"duplicate id {doc_id!r} in store")
        vec = _check_vector(values, dim=self.dim)
        if abs(float(np.linalg.norm(vec)) - 1.0) > UNIT_NORM_ATOL:
            raise EmbeddingError(f"vector for {doc_id!r} is not unit norm")
        vec = vec.copy()
        vec.setflags(write=False)  # stored vectors are shared across threads
        self._vectors[doc_id] = vec

    def get(self, doc_id: str) -> np.ndarray:
        try:
            return self._vectors[doc_id]
        except KeyError:
            raise KeyError(f"no embedding stored for id {doc_id!r}") from None

    def ids(self) -> list[str]:
        return list(self._vectors)

    def items(self) -> Iterable[tuple[str, np.ndarray]]:
        return self._vectors.items()

    def matrix(self, order: Sequence[str] | None = None) -> np.ndarray:
        """Vectors stacked as a (n, dim) float32 matrix in the given id order."""
        ids = list(order) if order is not None else self.ids()
        if not ids:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.get(i) for i in ids])

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the binary store format (magic, dim, count, provenance, id table, float block)."""
    ids = store.ids()
    with Path(path).open("wb") as handle:
        handle.write(STORE_MAGIC)
        handle.write(struct.pack("<I", store.dim))
        handle.write(struct.pack("<Q", len(ids)))
        prov = store.provenance.encode("utf-8")
        handle.write(struct.pack("<I", len(prov)))
        handle.write(prov)
        for doc_id in ids:
            encoded = doc_id.encode("utf-8")
            handle.write(struct.pack("<I", len(encoded)))
            handle.write(encoded)
        if ids:
            block = store.matrix(ids).astype("<f4")
            handle.write(block.tobytes())


def load_store(path: str | Path) -> EmbeddingStore:
    """Read the binary store format back; lossless for ids, provenance and vectors."""
    data = Path(path).read_bytes()
    if len(data) < len(STORE_MAGIC) or data[: len(STORE_MAGIC)] != STORE_MAGIC:
        raise StoreFormatError(f"{path}: bad magic bytes, not an embedding store")
    offset = len(STORE_MAGIC)
    try:
        (dim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        (count,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        (prov_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
    except struct.error as exc:
        raise StoreFormatError(f"{path}: truncated header") from exc
    if dim <= 0:
        raise StoreFormatError(f"{path}: non-positive dimension {dim}")
    prov_raw = data[offset : offset + prov_len]
    if len(prov_raw) != prov_len:
        raise StoreFormatError(f"{path}: truncated header")
    provenance = prov_raw.decode("utf-8")
    offset += prov_len
    ids: list[str] = []
    for _ in range(count):
        try:
            (id_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
        except struct.error as exc:
            raise StoreFormatError(f"{path}: truncated id table") from exc
        raw = data[offset : offset + id_len]
        if len(raw) != id_len:
            raise StoreFormatError(f"{path}: truncated id table")
        ids.append(raw.decode("utf-8"))
        offset += id_len
    expected = count * dim * 4
    payload = data[offset:]
    if len(payload) != expected:
        raise StoreFormatError(
            f"{path}: vector payload has {len(payload)} bytes, expected {expected}"
        )
    store = EmbeddingStore(dim=dim, provenance=provenance)
    if count:
        block = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
        for doc_id, row in zip(ids, block):
            store.add(doc_id, row.astype(np.float32))
    return store


def import_precomputed(vectors_path: str | Path, ids_path: str | Path) -> tuple[EmbeddingStore, int]:
    """Load externally produced vectors (headerless float32 block or CSV).

    Ids come one per line from ``ids_path``. Vectors deviating from unit norm
    by more than 1e-4 are re-normalized; the count of re-normalized rows is
    returned with the store.
    """
    ids = [line.rstrip("\n") for line in Path(ids_path).read_text("utf-8").splitlines()]
    ids = [i for i in ids if i]
    if not ids:
        raise EmbeddingError(f"{ids_path}: no ids")
    vectors_path = Path(vectors_path)
    if vectors_path.suffix.lower() == ".csv":
        rows = []
        with vectors_path.open("r", encoding="utf-8", newline="") as handle:
            for row in csv.reader(handle):
                if row:
                    rows.append([float(x) for x in row])
        if not rows:
            raise EmbeddingError(f"{vectors_path}: no vector rows")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise EmbeddingError(f"{vectors_path}: inconsistent row widths {sorted(widths)}")
        block = np.asarray(rows, dtype=np.float32)
    else:
        raw = vectors_path.read_bytes()
        if len(raw) % (4 * len(ids)) != 0:
            raise EmbeddingError(
                f"{vectors_path}: {len(raw)} bytes is not a whole number of "
                f"float32 rows for {len(ids)} ids"
            )
        block = np.frombuffer(raw, dtype="<f4").reshape(len(ids), -1).astype(np.float32)
    if block.shape[0] != len(ids):
        raise EmbeddingError(
            f"count mismatch: {block.shape[0]} vector rows for {len(ids)} ids"
        )
    if not np.all(np.isfinite(block)):
        raise EmbeddingError("imported vectors contain NaN or Inf")
    norms = np.linalg.norm(block, axis=1)
    if np.any(norms == 0.0):
        raise EmbeddingError("imported vectors contain a zero row")
    off_unit = np.abs(norms - 1.0) > 1e-4
    renormalized = int(off_unit.sum())
    block = block / norms[:, None]
    store = EmbeddingStore(dim=block.shape[1], provenance="imported")
    for doc_id, row in zip(ids, block):
        store.add(doc_id, row)
    return store, renormalized


def embed_corpus(
    documents: Iterable[Document],
    embedder: Callable[[str], np.ndarray],
    pooling: str = "cls",
    dim: int | None = None,
    provenance: str = "toy-v1",
) -> EmbeddingStore:
    """Embed a whole corpus into a fresh store."""
    docs = list(documents)
    if dim is None:
        if not docs:
            raise EmbeddingError("cannot infer dim from an empty corpus")
        dim = embed_document(docs[0], pooling, embedder).shape[0]
    store = EmbeddingStore(dim=dim, provenance=provenance)
    for doc in docs:
        store.add(doc.id, embed_document(doc, pooling, embedder))
    return store

"""Exact and approximate k-nearest-neighbor search under cosine similarity.

The index is immutable after fit and safe for concurrent readers. HNSW
construction is fully deterministic: node levels derive from a seeded
per-id hash and insertion follows the id sort order.
"""

from __future__ import annotations

import hashlib
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import _hnsw
from .embed import EmbeddingStore

INDEX_MAGIC = b"SPIDX1\0"

KIND_CODES = {"patent": 0, "paper": 1}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


class SearchIndexError(ValueError):
    """Invalid index input, configuration, or persisted payload."""


class Neighbor(NamedTuple):
    doc_id: str
    score: float


@dataclass(frozen=True)
class SearchFilter:
    """Metadata predicate applied during search."""

    year_min: int | None = None
    year_max: int | None = None
    kind: str | None = None

    def __post_init__(self):
        if self.year_min is not None and self.year_max is not None and self.year_min > self.year_max:
            raise SearchIndexError(f"year_min {self.year_min} > year_max {self.year_max}")
        if self.kind is not None and self.kind not in KIND_CODES:
            raise SearchIndexError(f"kind must be 'patent' or 'paper', got {self.kind!r}")

    def matches(self, year: int, kind: str) -> bool:
        if self.year_min is not None and year < self.year_min:
            return False
        if self.year_max is not None and year > self.year_max:
            return False
        if self.kind is not None and kind != self.kind:
            return False
        return True


@dataclass(frozen=True)
class IndexConfig:
    mode: str = "exact"
    hnsw_m: int = 16
    hnsw_ef_construction: int = 200
    hnsw_ef_search: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "hnsw"):
            raise SearchIndexError(f"mode must be 'exact' or 'hnsw', got {self.mode!r}")
        if self.hnsw_m < 2:
            raise SearchIndexError(f"hnsw_m must be >= 2, got {self.hnsw_m}")


def cosine(v, w) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.shape != w.shape:
        raise SearchIndexError(f"dimension mismatch: {v.shape} vs {w.shape}")
    nv = float(np.linalg.norm(v))
    nw = float(np.linalg.norm(w))
    if nv == 0.0 or nw == 0.0:
        raise SearchIndexError("cosine undefined for zero vectors")
    return float(np.clip(np.dot(v, w) / (nv * nw), -1.0, 1.0))


def _store_checksum(ids: Sequence[str], matrix: np.ndarray) -> bytes:
    digest = hashlib.sha256()
    digest.update(struct.pack("<IQ", matrix.shape[1] if matrix.size else 0, len(ids)))
    for doc_id in ids:
        encoded = doc_id.encode("utf-8")
        digest.update(struct.pack("<I", len(encoded)))
        digest.update(encoded)
    digest.update(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
    return digest.digest()


def _level_for_id(doc_id: str, seed: int, ml: float) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    h = int.from_bytes(hashlib.blake2b(doc_id.encode("utf-8"), digest_size=8, key=key).digest(), "little")
    u = (h + 1) / (2.0**64 + 1)  # in (0, 1)
    return int(-math.log(u) * ml)


class CosineKNNIndex(BaseEstimator):
    """Cosine kNN index with metadata filters; exact scan or HNSW graph.

    ``fit(store, meta)`` ingests an embedding store plus an id -> (pub_year,
    kind) mapping and returns the ready index. Results are sorted by score
    descending with ties broken by ascending doc id.
    """

    def __init__(
        self,
        mode: str = "exact",
        hnsw_m: int = 16,
        hnsw_ef_construction: int = 200,
        hnsw_ef_search: int = 128,
        seed: int = 0,
    ):
        self.mode = mode
        self.hnsw_m = hnsw_m
        self.hnsw_ef_construction = hnsw_ef_construction
        self.hnsw_ef_search = hnsw_ef_search
        self.seed = seed

    @property
    def config(self) -> IndexConfig:
        return IndexConfig(
            mode=self.mode,
            hnsw_m=self.hnsw_m,
            hnsw_ef_construction=self.hnsw_ef_construction,
            hnsw_ef_search=self.hnsw_ef_search,
            seed=self.seed,
        )

    def fit(self, store: EmbeddingStore, meta: Mapping[str, tuple[int, str]]):
        self.config  # validates parameters
        ids = sorted(store.ids())
        for doc_id in ids:
            if doc_id not in meta:
                raise SearchIndexError(f"no metadata for id {doc_id!r}")
        self.ids_ = ids
        self.id_pos_ = {doc_id: i for i, doc_id in enumerate(ids)}
        self.matrix_ = store.matrix(ids)
        self.dim_ = store.dim
        self.years_ = np.asarray([meta[i][0] for i in ids], dtype=np.int32)
        kinds = [meta[i][1] for i in ids]
        for doc_id, kind in zip(ids, kinds):
            if kind not in KIND_CODES:
                raise SearchIndexError(f"id {doc_id!r} has unknown kind {kind!r}")
        self.kinds_ = np.asarray([KIND_CODES[k] for k in kinds], dtype=np.uint8)
        self.checksum_ = _store_checksum(ids, self.matrix_)
        if self.mode == "hnsw":
            self._build_graph()
        else:
            self.levels_ = None
            self.adj_ = None
            self.deg_ = None
            self.entry_point_ = -1
        return self

    def __len__(self) -> int:
        return len(self.ids_)

    # --- HNSW construction ------------------------------------------------

    def _build_graph(self) -> None:
        n = len(self.ids_)
        ml = 1.0 / math.log(self.hnsw_m)
        self.levels_ = np.asarray(
            [_level_for_id(doc_id, self.seed, ml) for doc_id in self.ids_], dtype=np.int32
        )
        if n == 0:
            self.adj_ = np.zeros((1, 0, 2 * self.hnsw_m + 1), dtype=np.int32)
            self.deg_ = np.zeros((1, 0), dtype=np.int32)
            self.entry_point_ = -1
            return
        self.adj_, self.deg_, self.entry_point_ = _hnsw.build_graph(
            self.matrix_, self.levels_, self.hnsw_m, self.hnsw_ef_construction
        )

    # --- search -------------------------------------------------------------

    def _filter_mask(self, search_filter: SearchFilter | None, exclude: set[str] | None) -> np.ndarray:
        mask = np.ones(len(self.ids_), dtype=bool)
        if search_filter is not None:
            if search_filter.year_min is not None:
                mask &= self.years_ >= search_filter.year_min
            if search_filter.year_max is not None:
                mask &= self.years_ <= search_filter.year_max
            if search_filter.kind is not None:
                mask &= self.kinds_ == KIND_CODES[search_filter.kind]
        if exclude:
            for doc_id in exclude:
                pos = self.id_pos_.get(doc_id)
                if pos is not None:
                    mask[pos] = False
        return mask

    def search(
        self,
        query,
        k: int,
        search_filter: SearchFilter | None = None,
        exclude: set[str] | None = None,
    ) -> list[Neighbor]:
        """Top-k filtered neighbors, score descending, ties by ascending doc id."""
        if k <= 0:
            raise SearchIndexError(f"k must be positive, got {k}")
        query = np.asarray(query, dtype=np.float32)
        if query.shape != (self.dim_,):
            raise SearchIndexError(f"query has shape {query.shape}, index dim is {self.dim_}")
        norm = float(np.linalg.norm(query))
        if norm == 0.0:
            raise SearchIndexError("query is a zero vector")
        query = query / norm
        if len(self.ids_) == 0:
            return []
        mask = self._filter_mask(search_filter, exclude)
        if self.mode == "exact":
            return self._search_exact(query, k, mask)
        return self._search_hnsw(query, k, mask)

    def _search_exact(self, query: np.ndarray, k: int, mask: np.ndarray) -> list[Neighbor]:
        (allowed,) = np.nonzero(mask)
        if allowed.size == 0:
            return []
        scores = self.matrix_[allowed] @ query
        take = min(k, allowed.size)
        if allowed.size > 4 * take:
            # narrow to every score >= the take-th best so cutoff ties survive
            kth = np.partition(scores, allowed.size - take)[allowed.size - take]
            keep = np.nonzero(scores >= kth)[0]
            allowed = allowed[keep]
            scores = scores[keep]
        order = sorted(range(allowed.size), key=lambda i: (-scores[i], self.ids_[allowed[i]]))
        return [
            Neighbor(self.ids_[allowed[i]], float(np.clip(scores[i], -1.0, 1.0)))
            for i in order[:take]
        ]

    def _search_hnsw(self, query: np.ndarray, k: int, mask: np.ndarray) -> list[Neighbor]:
        if self.entry_point_ < 0:
            return []
        # over-fetch to absorb filter-induced recall loss
        ef = max(self.hnsw_ef_search, k, -(-4 * k // 3))
        dists, nodes, count = _hnsw.graph_search(
            self.matrix_, self.adj_, self.deg_, self.levels_,
            self.entry_point_, query, ef, mask.view(np.uint8),
        )
        # node order follows the id sort, so (distance, node) ties already
        # break by ascending doc id
        return [
            Neighbor(self.ids_[nodes[i]], float(np.clip(1.0 - dists[i], -1.0, 1.0)))
            for i in range(min(k, count))
        ]

    def batch_search(
        self,
        queries: Sequence,
        k: int,
        filters: Sequence[SearchFilter | None] | SearchFilter | None = None,
        excludes: Sequence[set[str] | None] | None = None,
        workers: int = 1,
    ) -> list[list[Neighbor]]:
        """Per-query search over a batch; output order matches input order."""
        queries = list(queries)
        if isinstance(filters, SearchFilter) or filters is None:
            filters = [filters] * len(queries)
        if excludes is None:
            excludes = [None] * len(queries)
        if not (len(queries) == len(filters) == len(excludes)):
            raise SearchIndexError("queries, filters and excludes must have equal lengths")
        if workers <= 1 or len(queries) <= 1:
            return [
                self.search(q, k, search_filter=f, exclude=e)
                for q, f, e in zip(queries, filters, excludes)
            ]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda args: self.search(args[0], k, args[1], args[2]),
                                 zip(queries, filters, excludes)))

    def vector_for(self, doc_id: str) -> np.ndarray:
        pos = self.id_pos_.get(doc_id)
        if pos is None:
            raise KeyError(f"id {doc_id!r} not in index")
        return self.matrix_[pos]

    def checksum_hex(self) -> str:
        return self.checksum_.hex()


def build_index(
    store: EmbeddingStore,
    meta: Mapping[str, tuple[int, str]],
    config: IndexConfig | None = None,
) -> CosineKNNIndex:
    """Build an immutable search index over a store (exact scan or HNSW)."""
    config = config or IndexConfig()
    return CosineKNNIndex(
        mode=config.mode,
        hnsw_m=config.hnsw_m,
        hnsw_ef_construction=config.hnsw_ef_construction,
        hnsw_ef_search=config.hnsw_ef_search,
        seed=config.seed,
    ).fit(store, meta)


def search(
    index: CosineKNNIndex,
    query,
    k: int,
    search_filter: SearchFilter | None = None,
    exclude: set[str] | None = None,
) -> list[Neighbor]:
    return index.search(query, k, search_filter=search_filter, exclude=exclude)


def batch_search(
    index: CosineKNNIndex,
    queries: Sequence,
    k: int,
    filters: Sequence[SearchFilter | None] | SearchFilter | None = None,
    excludes: Sequence[set[str] | None] | None = None,
    workers: int = 1,
) -> list[list[Neighbor]]:
    return index.batch_search(queries, k, filters=filters, excludes=excludes, workers=workers)


# --- persistence ------------------------------------------------------------


def save_index(index: CosineKNNIndex, path: str | Path) -> None:
    """Persist config, metadata and (for HNSW) adjacency as u32 LE id offsets."""
    n = len(index.ids_)
    with Path(path).open("wb") as handle:
        handle.write(INDEX_MAGIC)
        mode_code = 0 if index.mode == "exact" else 1
        handle.write(
            struct.pack(
                "<BIIIqIQ",
                mode_code,
                index.hnsw_m,
                index.hnsw_ef_construction,
                index.hnsw_ef_search,
                index.seed,
                index.dim_,
                n,
            )
        )
        handle.write(index.checksum_)
        handle.write(index.years_.astype("<i4").tobytes())
        handle.write(index.kinds_.astype("u1").tobytes())
        if index.mode == "hnsw":
            handle.write(struct.pack("<i", index.entry_point_))
            handle.write(index.levels_.astype("<i4").tobytes())
            for node in range(n):
                for layer in range(int(index.levels_[node]) + 1):
                    count = int(index.deg_[layer, node])
                    handle.write(struct.pack("<I", count))
                    handle.write(index.adj_[layer, node, :count].astype("<u4").tobytes())


def load_index(path: str | Path, store: EmbeddingStore) -> CosineKNNIndex:
    """Load a persisted index; the store checksum recorded at build must match."""
    data = Path(path).read_bytes()
    if len(data) < len(INDEX_MAGIC) or data[: len(INDEX_MAGIC)] != INDEX_MAGIC:
        raise SearchIndexError(f"{path}: bad magic bytes, not an index file")
    offset = len(INDEX_MAGIC)
    header = struct.Struct("<BIIIqIQ")
    try:
        mode_code, m, efc, efs, seed, dim, n = header.unpack_from(data, offset)
    except struct.error as exc:
        raise SearchIndexError(f"{path}: truncated header") from exc
    offset += header.size
    checksum = data[offset : offset + 32]
    offset += 32
    ids = sorted(store.ids())
    matrix = store.matrix(ids)
    if _store_checksum(ids, matrix) != checksum:
        raise SearchIndexError(f"{path}: store checksum mismatch; index was built from a different store")
    index = CosineKNNIndex(
        mode="exact" if mode_code == 0 else "hnsw",
        hnsw_m=m,
        hnsw_ef_construction=efc,
        hnsw_ef_search=efs,
        seed=seed,
    )
    index.ids_ = ids
    index.id_pos_ = {doc_id: i for i, doc_id in enumerate(ids)}
    index.matrix_ = matrix
    index.dim_ = dim
    index.years_ = np.frombuffer(data, dtype="<i4", count=n, offset=offset).copy()
    offset += 4 * n
    index.kinds_ = np.frombuffer(data, dtype="u1", count=n, offset=offset).copy()
    offset += n
    index.checksum_ = checksum
    if mode_code == 0:
        index.levels_ = None
        index.adj_ = None
        index.deg_ = None
        index.entry_point_ = -1
        return index
    (index.entry_point_,) = struct.unpack_from("<i", data, offset)
    offset += 4
    index.levels_ = np.frombuffer(data, dtype="<i4", count=n, offset=offset).astype(np.int32)
    offset += 4 * n
    max_level = int(index.levels_.max()) if n else 0
    cap = 2 * m + 1
    adj = np.full((max_level + 1, n, cap), -1, dtype=np.int32)
    deg = np.zeros((max_level + 1, n), dtype=np.int32)
    for node in range(n):
        for layer in range(int(index.levels_[node]) + 1):
            try:
                (count,) = struct.unpack_from("<I", data, offset)
            except struct.error as exc:
                raise SearchIndexError(f"{path}: truncated adjacency data") from exc
            offset += 4
            nbrs = np.frombuffer(data, dtype="<u4", count=count, offset=offset)
            if nbrs.size != count:
                raise SearchIndexError(f"{path}: truncated adjacency data")
            offset += 4 * count
            adj[layer, node, :count] = nbrs.astype(np.int32)
            deg[layer, node] = count
    index.adj_ = adj
    index.deg_ = deg
    return index

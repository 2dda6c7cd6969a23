"""Embedding index over chunks: exact cosine scan plus an optional
HNSW-style approximate layer for large corpora.

The exact scan is the reference backend and the only one used when a
document filter is active; the ANN graph is built when the index grows
past ``ann_threshold`` entries or when parameters are passed explicitly.
Persistence is three flat files: ``vector.meta.json``, ``vector.f32``
(row-major little-endian float32, L2-normalized rows), and
``vector.ids.jsonl``.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import IndexingError
from .ingest import Chunk
from .providers import Embedder

DEFAULT_ANN_THRESHOLD = 10_000

META_FILE = "vector.meta.json"
VECTORS_FILE = "vector.f32"
IDS_FILE = "vector.ids.jsonl"


@dataclass(frozen=True)
class AnnParams:
    """HNSW construction/search parameters."""

    m: int = 16
    ef_construction: int = 100
    ef_search: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 2 or self.ef_construction < 1 or self.ef_search < 1:
            raise ValueError("invalid ANN parameters")


@dataclass(frozen=True)
class VectorHit:
    chunk_id: str
    doc_id: str
    score: float
    text: str


class _HnswGraph:
    """Minimal hierarchical navigable-small-world graph over normalized rows.

    Distance is cosine distance (1 - dot) on unit vectors. Construction is
    deterministic for a given seed: levels are drawn from a seeded RNG and
    insertion order follows row order.
    """

    def __init__(self, matrix: np.ndarray, params: AnnParams):
        self.matrix = matrix
        self.params = params
        self.entry_point = 0
        self.max_level = 0
        # adjacency[level][node] -> list of neighbor row indexes
        self.levels: list[int] = []
        self.adjacency: list[dict[int, list[int]]] = [{}]
        self._build()

    def _distance(self, i: int, vec: np.ndarray) -> float:
        return 1.0 - float(self.matrix[i] @ vec)

    def _search_layer(self, vec: np.ndarray, entry: int, ef: int, level: int) -> list[tuple[float, int]]:
        """Greedy beam search on one layer; returns (distance, node) sorted."""
        visited = {entry}
        d0 = self._distance(entry, vec)
        candidates = [(d0, entry)]  # min-heap by distance
        best: list[tuple[float, int]] = [(-d0, entry)]  # max-heap of ef closest
        adjacency = self.adjacency[level]
        while candidates:
            dist, node = heapq.heappop(candidates)
            if dist > -best[0][0]:
                break
            for neighbor in adjacency.get(node, ()):
                if neighbor in visited:
                    continue
                visited.add(neighbor)
                d = self._distance(neighbor, vec)
                if len(best) < ef or d < -best[0][0]:
                    heapq.heappush(candidates, (d, neighbor))
                    heapq.heappush(best, (-d, neighbor))
                    if len(best) > ef:
                        heapq.heappop(best)
        return sorted((-negd, node) for negd, node in best)

    def _add_link(self, level: int, node: int, neighbor: int, cap: int) -> None:
        links = self.adjacency[level].setdefault(node, [])
        if neighbor in links:
            return
        links.append(neighbor)
        if len(links) > cap:
            vec = self.matrix[node]
            links.sort(key=lambda j: (1.0 - float(self.matrix[j] @ vec), j))
            del links[cap:]

    def _build(self) -> None:
        n = self.matrix.shape[0]
        rng = random.Random(self.params.seed)
        level_scale = 1.0 / math.log(self.params.m)
        self.levels = [
            int(-math.log(max(rng.random(), 1e-12)) * level_scale) for _ in range(n)
        ]
        self.max_level = self.levels[0]
        self.entry_point = 0
        while len(self.adjacency) <= max(self.levels):
            self.adjacency.append({})
        m = self.params.m
        for node in range(n):
            level = self.levels[node]
            if node == 0:
                for lv in range(level + 1):
                    self.adjacency[lv].setdefault(node, [])
                self.max_level = level
                continue
            vec = self.matrix[node]
            entry = self.entry_point
            for lv in range(self.max_level, level, -1):
                entry = self._search_layer(vec, entry, 1, lv)[0][1]
            for lv in range(min(level, self.max_level), -1, -1):
                neighbors = self._search_layer(vec, entry, self.params.ef_construction, lv)
                entry = neighbors[0][1]
                cap = m * 2 if lv == 0 else m
                for _, neighbor in neighbors[:m]:
                    self._add_link(lv, node, neighbor, cap)
                    self._add_link(lv, neighbor, node, cap)
            if level > self.max_level:
                self.max_level = level
                self.entry_point = node

    def search(self, vec: np.ndarray, k: int) -> list[int]:
        entry = self.entry_point
        for lv in range(self.max_level, 0, -1):
            entry = self._search_layer(vec, entry, 1, lv)[0][1]
        ef = max(self.params.ef_search, k)
        found = self._search_layer(vec, entry, ef, 0)
        return [node for _, node in found[:k]]


class VectorIndex:
    """Immutable cosine-similarity index over chunk embeddings."""

    def __init__(
        self,
        chunk_ids: Sequence[str],
        doc_ids: Sequence[str],
        texts: Sequence[str],
        matrix: np.ndarray,
        *,
        ann_params: AnnParams | None = None,
    ):
        if matrix.ndim != 2 or matrix.shape[0] != len(chunk_ids):
            raise IndexingError("vector matrix shape does not match entry count")
        if len(set(chunk_ids)) != len(chunk_ids):
            raise IndexingError("duplicate chunk_id in vector index")
        self.chunk_ids = list(chunk_ids)
        self.doc_ids = list(doc_ids)
        self.texts = list(texts)
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        self.matrix = (matrix / norms).astype(np.float32)
        self.metric = "cosine"
        self.ann_params = ann_params
        self._ann = _HnswGraph(self.matrix, ann_params) if ann_params else None
        self._row_by_chunk = {cid: i for i, cid in enumerate(self.chunk_ids)}

    def __len__(self) -> int:
        return len(self.chunk_ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def chunk_text(self, chunk_id: str) -> str | None:
        row = self._row_by_chunk.get(chunk_id)
        return None if row is None else self.texts[row]


def build_vector_index(
    chunks: Sequence[Chunk],
    embed: Embedder,
    *,
    ann_params: AnnParams | None = None,
    ann_threshold: int = DEFAULT_ANN_THRESHOLD,
) -> VectorIndex:
    """Embed chunks and assemble the index.

    The ANN layer is built when parameters are passed explicitly or the
    corpus exceeds ``ann_threshold`` entries; below that an exact scan is
    both faster to build and exactly correct.
    """
    if not chunks:
        raise IndexingError("cannot build an index from zero chunks")
    seen: set[str] = set()
    for chunk in chunks:
        if chunk.chunk_id in seen:
            raise IndexingError(f"duplicate chunk_id {chunk.chunk_id!r}")
        seen.add(chunk.chunk_id)
    vectors = embed.embed_texts([c.text for c in chunks])
    matrix = np.array([v.values for v in vectors], dtype=np.float32)
    if ann_params is None and len(chunks) > ann_threshold:
        ann_params = AnnParams()
    return VectorIndex(
        [c.chunk_id for c in chunks],
        [c.doc_id for c in chunks],
        [c.text for c in chunks],
        matrix,
        ann_params=ann_params,
    )


def vector_retrieve(
    index: VectorIndex,
    query: str,
    top_k: int,
    embed: Embedder,
    *,
    doc_filter: Iterable[str] | None = None,
    exact: bool | None = None,
) -> list[VectorHit]:
    """Top-k chunks by cosine similarity, sorted by score then chunk_id.

    ``doc_filter`` restricts candidates to the listed documents (the
    single-paper scenario) and always uses the exact scan, which equals
    the unfiltered scan restricted to the filter and re-truncated.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if len(index) == 0:
        raise IndexingError("vector index is empty")
    query_vec = np.array(embed.embed_texts([query])[0].values, dtype=np.float32)
    if query_vec.shape[0] != index.dim:
        raise IndexingError(
            f"query embedding dim {query_vec.shape[0]} != index dim {index.dim}"
        )
    norm = float(np.linalg.norm(query_vec))
    if norm > 0.0:
        query_vec = query_vec / norm

    filter_set = set(doc_filter) if doc_filter is not None else None
    use_ann = index._ann is not None and filter_set is None and exact is not True

    if use_ann:
        rows = index._ann.search(query_vec, top_k)
    else:
        rows = [
            i
            for i in range(len(index))
            if filter_set is None or index.doc_ids[i] in filter_set
        ]
    scored = [
        (float(index.matrix[i] @ query_vec), index.chunk_ids[i], i) for i in rows
    ]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [
        VectorHit(index.chunk_ids[i], index.doc_ids[i], score, index.texts[i])
        for score, _, i in scored[:top_k]
    ]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_vector_index(index: VectorIndex, index_dir: str | Path) -> None:
    index_dir = Path(index_dir)
    index_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "dim": index.dim,
        "metric": index.metric,
        "count": len(index),
        "ann_params": (
            None
            if index.ann_params is None
            else {
                "m": index.ann_params.m,
                "ef_construction": index.ann_params.ef_construction,
                "ef_search": index.ann_params.ef_search,
                "seed": index.ann_params.seed,
            }
        ),
    }
    (index_dir / META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    matrix = np.ascontiguousarray(index.matrix, dtype="<f4")
    (index_dir / VECTORS_FILE).write_bytes(matrix.tobytes())
    with open(index_dir / IDS_FILE, "w", encoding="utf-8") as fh:
        for chunk_id, doc_id, text in zip(index.chunk_ids, index.doc_ids, index.texts):
            fh.write(json.dumps({"chunk_id": chunk_id, "doc_id": doc_id, "text": text}) + "\n")


def load_vector_index(index_dir: str | Path) -> VectorIndex:
    """Reload a persisted index; the ANN graph is rebuilt deterministically."""
    index_dir = Path(index_dir)
    try:
        meta = json.loads((index_dir / META_FILE).read_text(encoding="utf-8"))
        raw = (index_dir / VECTORS_FILE).read_bytes()
        rows = [
            json.loads(line)
            for line in (index_dir / IDS_FILE).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    except (OSError, json.JSONDecodeError) as exc:
        raise IndexingError(f"cannot load vector index from {index_dir}: {exc}") from exc
    dim, count = int(meta["dim"]), int(meta["count"])
    matrix = np.frombuffer(raw, dtype="<f4").reshape(count, dim).copy()
    if len(rows) != count:
        raise IndexingError(f"id file has {len(rows)} rows, meta says {count}")
    ann = meta.get("ann_params")
    ann_params = (
        AnnParams(ann["m"], ann["ef_construction"], ann["ef_search"], ann.get("seed", 0))
        if ann
        else None
    )
    return VectorIndex(
        [r["chunk_id"] for r in rows],
        [r["doc_id"] for r in rows],
        [r["text"] for r in rows],
        matrix,
        ann_params=ann_params,
    )

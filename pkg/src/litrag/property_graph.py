"""LLM-extracted knowledge graph over chunks and its two retrievers.

Construction asks a chat model for ``(subject | relation | object)``
lines per chunk, merges entities by case-folded name, and embeds node
names for similarity seeding. Retrieval combines vector-context
traversal (seed nodes by embedding similarity, bounded breadth-first
expansion) with synonym keyword matching, merged by max score.

The graph is an embedded file-backed store: nodes, edges, and chunk
provenance persist as JSONL plus a meta file, so no external database
is required for dual (vector + graph) indexing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import GraphError
from .ingest import Chunk
from .prompts import load_prompt
from .providers import ChatMessage, ChatModel, Embedder, user_message

logger = logging.getLogger(__name__)

DEFAULT_MAX_PATHS_PER_CHUNK = 10

NODES_FILE = "graph.nodes.jsonl"
EDGES_FILE = "graph.edges.jsonl"
CHUNKS_FILE = "graph.chunks.jsonl"
META_FILE = "graph.meta.json"

_TRIPLET_LINE = re.compile(r"^\s*\((.*)\)\s*$")


class GraphHitKind(str, Enum):
    TRIPLET = "triplet"
    CHUNK = "chunk"


@dataclass(frozen=True)
class Triplet:
    """One extracted fact with chunk provenance."""

    subject: str
    relation: str
    obj: str
    chunk_id: str
    doc_id: str

    def __post_init__(self) -> None:
        for part in (self.subject, self.relation, self.obj):
            if not part.strip():
                raise GraphError("triplet parts must be non-empty")

    def rendered(self) -> str:
        return render_triplet(self.subject, self.relation, self.obj)


def render_triplet(subject: str, relation: str, obj: str) -> str:
    return f"{subject} —{relation}→ {obj}"


def match_key_for(name: str) -> str:
    return name.strip().casefold()


def node_id_for(match_key: str) -> str:
    return "e-" + hashlib.sha256(match_key.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class EntityNode:
    node_id: str
    name: str
    match_key: str
    embedding: tuple[float, ...]
    chunk_ids: tuple[str, ...]


@dataclass(frozen=True)
class GraphEdge:
    source: str
    relation: str
    target: str
    chunk_id: str


@dataclass(frozen=True)
class ChunkRef:
    chunk_id: str
    doc_id: str
    text: str


@dataclass(frozen=True)
class GraphHit:
    kind: GraphHitKind
    text: str
    score: float
    provenance: frozenset[str]
    hops: int


@dataclass(frozen=True)
class GraphConfig:
    max_paths_per_chunk: int = DEFAULT_MAX_PATHS_PER_CHUNK

    def __post_init__(self) -> None:
        if self.max_paths_per_chunk < 1:
            raise ValueError("max_paths_per_chunk must be >= 1")


@dataclass(frozen=True)
class GraphRetrievalParams:
    top_k_nodes: int = 4
    path_depth: int = 1
    max_synonyms: int = 10

    def __post_init__(self) -> None:
        if self.top_k_nodes < 1 or self.path_depth < 1 or self.max_synonyms < 1:
            raise ValueError("graph retrieval parameters must be >= 1")


class PropertyGraph:
    """Immutable entity graph with chunk provenance.

    ``chunks`` maps chunk_id to its source text so retrieval can return
    passage-level hits alongside triplets.
    """

    def __init__(
        self,
        nodes: Sequence[EntityNode],
        edges: Sequence[GraphEdge],
        chunks: Mapping[str, ChunkRef],
        *,
        max_paths_per_chunk: int = DEFAULT_MAX_PATHS_PER_CHUNK,
        extraction_warnings: int = 0,
    ):
        self.nodes: dict[str, EntityNode] = {}
        for node in nodes:
            if node.match_key in {n.match_key for n in self.nodes.values()}:
                raise GraphError(f"duplicate match_key {node.match_key!r}")
            if not node.chunk_ids:
                raise GraphError(f"node {node.name!r} has no provenance")
            self.nodes[node.node_id] = node
        self.edges: list[GraphEdge] = list(dict.fromkeys(edges))
        self.chunks = dict(chunks)
        self.max_paths_per_chunk = max_paths_per_chunk
        self.extraction_warnings = extraction_warnings
        self._validate()
        self._adjacency: dict[str, list[tuple[str, int]]] = {nid: [] for nid in self.nodes}
        for idx, edge in enumerate(self.edges):
            self._adjacency[edge.source].append((edge.target, idx))
            self._adjacency[edge.target].append((edge.source, idx))
        self._node_order = sorted(self.nodes.values(), key=lambda n: n.match_key)
        self._matrix: np.ndarray | None = None

    def _validate(self) -> None:
        per_chunk: dict[str, int] = {}
        for edge in self.edges:
            if edge.source not in self.nodes or edge.target not in self.nodes:
                raise GraphError(f"edge {edge} references a missing node")
            if edge.chunk_id not in self.chunks:
                raise GraphError(f"edge {edge} references unknown chunk {edge.chunk_id!r}")
            per_chunk[edge.chunk_id] = per_chunk.get(edge.chunk_id, 0) + 1
        for chunk_id, count in per_chunk.items():
            if count > self.max_paths_per_chunk:
                raise GraphError(
                    f"chunk {chunk_id!r} contributes {count} edges, cap is {self.max_paths_per_chunk}"
                )

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def node_matrix(self) -> np.ndarray:
        """Node embeddings as L2-normalized rows, ordered by match_key."""
        if self._matrix is None:
            if not self._node_order:
                self._matrix = np.zeros((0, 0), dtype=np.float32)
            else:
                mat = np.array([n.embedding for n in self._node_order], dtype=np.float32)
                norms = np.linalg.norm(mat, axis=1, keepdims=True)
                norms[norms == 0.0] = 1.0
                self._matrix = mat / norms
        return self._matrix

    def ordered_nodes(self) -> list[EntityNode]:
        return list(self._node_order)

    def render_edge(self, edge: GraphEdge) -> str:
        source = self.nodes[edge.source].name
        target = self.nodes[edge.target].name
        return render_triplet(source, edge.relation, target)


# ---------------------------------------------------------------------------
# Extraction and construction
# ---------------------------------------------------------------------------


def build_extraction_messages(chunk_text: str, max_paths: int) -> list[ChatMessage]:
    template = load_prompt("extraction")
    return user_message(template.format(max_paths=max_paths, chunk_text=chunk_text))


def parse_triplet_lines(response: str) -> list[tuple[str, str, str]]:
    """Strict ``(s | r | o)`` line parser; malformed lines are dropped."""
    parsed: list[tuple[str, str, str]] = []
    for line in response.splitlines():
        match = _TRIPLET_LINE.match(line)
        if not match:
            continue
        parts = [p.strip() for p in match.group(1).split("|")]
        if len(parts) != 3 or not all(parts):
            continue
        parsed.append((parts[0], parts[1], parts[2]))
    return parsed


def extract_triplets(chunk: Chunk, max_paths: int, llm: ChatModel) -> list[Triplet]:
    """Ask the LLM for facts in one chunk; cap at max_paths.

    A response with no parseable lines yields an empty list and a logged
    warning rather than an error, so one bad chunk cannot abort a build.
    """
    if max_paths < 1:
        raise ValueError("max_paths must be >= 1")
    response = llm.complete(build_extraction_messages(chunk.text, max_paths))
    rows = parse_triplet_lines(response)
    if not rows:
        logger.warning("no triplets parsed from chunk %s", chunk.chunk_id)
        return []
    return [
        Triplet(s, r, o, chunk.chunk_id, chunk.doc_id) for s, r, o in rows[:max_paths]
    ]


def build_property_graph(
    chunks: Sequence[Chunk],
    config: GraphConfig,
    llm: ChatModel,
    embed: Embedder,
) -> PropertyGraph:
    """Extract triplets from every chunk and assemble the merged graph.

    Entities merge by case-folded name with first-seen surface form;
    node embeddings come from one batch over unique entity names.
    Chunks are processed in order so a scripted transcript reproduces
    the same graph every time.
    """
    if not chunks:
        raise GraphError("cannot build a graph from zero chunks")
    triplets: list[Triplet] = []
    warnings = 0
    for chunk in chunks:
        extracted = extract_triplets(chunk, config.max_paths_per_chunk, llm)
        if not extracted:
            warnings += 1
        triplets.extend(extracted)

    names: dict[str, str] = {}  # match_key -> first-seen surface form
    provenance: dict[str, list[str]] = {}
    for t in triplets:
        for name in (t.subject, t.obj):
            key = match_key_for(name)
            names.setdefault(key, name.strip())
            bucket = provenance.setdefault(key, [])
            if t.chunk_id not in bucket:
                bucket.append(t.chunk_id)

    keys = list(names)
    embeddings: list[tuple[float, ...]] = []
    if keys:
        vectors = embed.embed_texts([names[k] for k in keys])
        embeddings = [v.values for v in vectors]

    nodes = [
        EntityNode(
            node_id=node_id_for(key),
            name=names[key],
            match_key=key,
            embedding=embeddings[i],
            chunk_ids=tuple(sorted(provenance[key])),
        )
        for i, key in enumerate(keys)
    ]
    edges = [
        GraphEdge(
            source=node_id_for(match_key_for(t.subject)),
            relation=t.relation.strip(),
            target=node_id_for(match_key_for(t.obj)),
            chunk_id=t.chunk_id,
        )
        for t in triplets
    ]
    chunk_refs = {c.chunk_id: ChunkRef(c.chunk_id, c.doc_id, c.text) for c in chunks}
    return PropertyGraph(
        nodes,
        edges,
        chunk_refs,
        max_paths_per_chunk=config.max_paths_per_chunk,
        extraction_warnings=warnings,
    )


# ---------------------------------------------------------------------------
# Retrieval
# ---------------------------------------------------------------------------


def _bfs_node_distances(
    graph: PropertyGraph, seed: str, max_depth: int
) -> dict[str, int]:
    """Shortest hop count from seed to each node, bounded by max_depth."""
    dist = {seed: 0}
    queue = deque([seed])
    while queue:
        node = queue.popleft()
        if dist[node] >= max_depth:
            continue
        for neighbor, _ in graph._adjacency[node]:
            if neighbor not in dist:
                dist[neighbor] = dist[node] + 1
                queue.append(neighbor)
    return dist


def _collect_hits(
    graph: PropertyGraph,
    edge_state: Mapping[int, tuple[float, int]],
) -> list[GraphHit]:
    """Fold per-edge (score, hops) into triplet hits plus chunk hits.

    Edges that render to the same text merge (max score, min hops,
    provenance union); every provenance chunk becomes a chunk hit that
    inherits the best score and hops of its edges.
    """
    by_text: dict[str, tuple[float, int, set[str]]] = {}
    by_chunk: dict[str, tuple[float, int]] = {}
    for idx, (score, hops) in edge_state.items():
        edge = graph.edges[idx]
        text = graph.render_edge(edge)
        if text in by_text:
            prev_score, prev_hops, chunk_ids = by_text[text]
            chunk_ids.add(edge.chunk_id)
            by_text[text] = (max(prev_score, score), min(prev_hops, hops), chunk_ids)
        else:
            by_text[text] = (score, hops, {edge.chunk_id})
        if edge.chunk_id in by_chunk:
            prev_score, prev_hops = by_chunk[edge.chunk_id]
            by_chunk[edge.chunk_id] = (max(prev_score, score), min(prev_hops, hops))
        else:
            by_chunk[edge.chunk_id] = (score, hops)

    hits = [
        GraphHit(GraphHitKind.TRIPLET, text, score, frozenset(chunk_ids), hops)
        for text, (score, hops, chunk_ids) in by_text.items()
    ]
    hits.extend(
        GraphHit(
            GraphHitKind.CHUNK,
            graph.chunks[chunk_id].text,
            score,
            frozenset({chunk_id}),
            hops,
        )
        for chunk_id, (score, hops) in by_chunk.items()
    )
    hits.sort(key=lambda h: (-h.score, h.text, h.kind.value))
    return hits


def vector_context_retrieve(
    graph: PropertyGraph,
    query: str,
    top_k_nodes: int,
    path_depth: int,
    embed: Embedder,
) -> list[GraphHit]:
    """Seed by embedding similarity, then expand breadth-first.

    An edge is traversed at hop ``min(dist(u), dist(v)) + 1`` from a
    seed; across seeds the hit keeps the minimum hop count and the
    maximum similarity of any seed that reaches it within path_depth.
    """
    if top_k_nodes < 1 or path_depth < 1:
        raise ValueError("top_k_nodes and path_depth must be >= 1")
    if not graph.nodes:
        return []
    query_vec = np.array(embed.embed_texts([query])[0].values, dtype=np.float32)
    norm = float(np.linalg.norm(query_vec))
    if norm > 0.0:
        query_vec = query_vec / norm
    sims = graph.node_matrix() @ query_vec
    order = sorted(
        range(len(graph.ordered_nodes())),
        key=lambda i: (-float(sims[i]), graph.ordered_nodes()[i].match_key),
    )
    seeds = [
        (graph.ordered_nodes()[i].node_id, float(sims[i]))
        for i in order[:top_k_nodes]
    ]

    edge_state: dict[int, tuple[float, int]] = {}
    for seed_id, similarity in seeds:
        dist = _bfs_node_distances(graph, seed_id, path_depth - 1)
        for idx, edge in enumerate(graph.edges):
            ends = [d for d in (dist.get(edge.source), dist.get(edge.target)) if d is not None]
            if not ends:
                continue
            hops = min(ends) + 1
            if hops > path_depth:
                continue
            if idx in edge_state:
                prev_score, prev_hops = edge_state[idx]
                edge_state[idx] = (max(prev_score, similarity), min(prev_hops, hops))
            else:
                edge_state[idx] = (similarity, hops)
    return _collect_hits(graph, edge_state)


def build_synonym_messages(query: str, max_synonyms: int) -> list[ChatMessage]:
    template = load_prompt("synonyms")
    return user_message(template.format(max_synonyms=max_synonyms, query=query))


def parse_keyword_lines(response: str, max_synonyms: int) -> list[str]:
    keywords = [line.strip() for line in response.splitlines() if line.strip()]
    return keywords[:max_synonyms]


def synonym_retrieve(
    graph: PropertyGraph,
    query: str,
    max_synonyms: int,
    llm: ChatModel,
) -> list[GraphHit]:
    """Keyword search over entity names via LLM-generated synonyms.

    A node whose match_key equals a keyword scores 1.0; a substring
    match scores 0.5. Incident edges of matched nodes are returned at
    hops = 1 together with their provenance chunks.
    """
    if max_synonyms < 1:
        raise ValueError("max_synonyms must be >= 1")
    if not graph.nodes:
        return []
    response = llm.complete(build_synonym_messages(query, max_synonyms))
    keywords = [k.casefold() for k in parse_keyword_lines(response, max_synonyms)]
    if not keywords:
        return []

    node_scores: dict[str, float] = {}
    for node in graph.ordered_nodes():
        best = 0.0
        for keyword in keywords:
            if node.match_key == keyword:
                best = max(best, 1.0)
            elif keyword in node.match_key:
                best = max(best, 0.5)
        if best > 0.0:
            node_scores[node.node_id] = best

    edge_state: dict[int, tuple[float, int]] = {}
    for node_id, score in node_scores.items():
        for _, idx in graph._adjacency[node_id]:
            if idx in edge_state:
                edge_state[idx] = (max(edge_state[idx][0], score), 1)
            else:
                edge_state[idx] = (score, 1)
    return _collect_hits(graph, edge_state)


def graph_retrieve(
    graph: PropertyGraph,
    query: str,
    params: GraphRetrievalParams,
    llm: ChatModel,
    embed: Embedder,
) -> list[GraphHit]:
    """Deduplicated union of the vector-context and synonym branches.

    Keyed by rendered triplet text (triplet hits) or chunk_id (chunk
    hits); each key keeps the max score, min hops, and unioned
    provenance. Sorted by score desc, then text asc.
    """
    vector_hits = vector_context_retrieve(
        graph, query, params.top_k_nodes, params.path_depth, embed
    )
    synonym_hits = synonym_retrieve(graph, query, params.max_synonyms, llm)

    merged: dict[tuple[str, str], GraphHit] = {}
    for hit in list(vector_hits) + list(synonym_hits):
        if hit.kind is GraphHitKind.CHUNK:
            key = (hit.kind.value, next(iter(hit.provenance)))
        else:
            key = (hit.kind.value, hit.text)
        prev = merged.get(key)
        if prev is None:
            merged[key] = hit
        else:
            merged[key] = GraphHit(
                hit.kind,
                hit.text,
                max(prev.score, hit.score),
                prev.provenance | hit.provenance,
                min(prev.hops, hit.hops),
            )
    results = sorted(merged.values(), key=lambda h: (-h.score, h.text, h.kind.value))
    return results


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_property_graph(graph: PropertyGraph, index_dir: str | Path) -> None:
    index_dir = Path(index_dir)
    index_dir.mkdir(parents=True, exist_ok=True)
    with open(index_dir / NODES_FILE, "w", encoding="utf-8") as fh:
        for node in graph.ordered_nodes():
            fh.write(
                json.dumps(
                    {
                        "node_id": node.node_id,
                        "name": node.name,
                        "chunk_ids": list(node.chunk_ids),
                        "embedding": list(node.embedding),
                    }
                )
                + "\n"
            )
    with open(index_dir / EDGES_FILE, "w", encoding="utf-8") as fh:
        for edge in graph.edges:
            fh.write(
                json.dumps(
                    {
                        "source": edge.source,
                        "relation": edge.relation,
                        "target": edge.target,
                        "chunk_id": edge.chunk_id,
                    }
                )
                + "\n"
            )
    with open(index_dir / CHUNKS_FILE, "w", encoding="utf-8") as fh:
        for ref in sorted(graph.chunks.values(), key=lambda r: r.chunk_id):
            fh.write(
                json.dumps(
                    {"chunk_id": ref.chunk_id, "doc_id": ref.doc_id, "text": ref.text}
                )
                + "\n"
            )
    meta = {
        "node_count": graph.node_count,
        "edge_count": graph.edge_count,
        "chunk_count": len(graph.chunks),
        "max_paths_per_chunk": graph.max_paths_per_chunk,
        "extraction_warnings": graph.extraction_warnings,
    }
    (index_dir / META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _read_jsonl(path: Path) -> list[dict]:
    try:
        return [
            json.loads(line)
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    except (OSError, json.JSONDecodeError) as exc:
        raise GraphError(f"cannot read {path}: {exc}") from exc


def load_property_graph(index_dir: str | Path) -> PropertyGraph:
    """Reload a persisted graph; integrity violations raise GraphError."""
    index_dir = Path(index_dir)
    try:
        meta = json.loads((index_dir / META_FILE).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GraphError(f"cannot read graph meta from {index_dir}: {exc}") from exc
    node_rows = _read_jsonl(index_dir / NODES_FILE)
    edge_rows = _read_jsonl(index_dir / EDGES_FILE)
    chunk_rows = _read_jsonl(index_dir / CHUNKS_FILE)
    nodes = [
        EntityNode(
            node_id=row["node_id"],
            name=row["name"],
            match_key=match_key_for(row["name"]),
            embedding=tuple(float(x) for x in row["embedding"]),
            chunk_ids=tuple(row["chunk_ids"]),
        )
        for row in node_rows
    ]
    edges = [
        GraphEdge(row["source"], row["relation"], row["target"], row["chunk_id"])
        for row in edge_rows
    ]
    chunks = {
        row["chunk_id"]: ChunkRef(row["chunk_id"], row["doc_id"], row["text"])
        for row in chunk_rows
    }
    graph = PropertyGraph(
        nodes,
        edges,
        chunks,
        max_paths_per_chunk=int(meta.get("max_paths_per_chunk", DEFAULT_MAX_PATHS_PER_CHUNK)),
        extraction_warnings=int(meta.get("extraction_warnings", 0)),
    )
    if graph.node_count != int(meta.get("node_count", graph.node_count)):
        raise GraphError("node count does not match graph meta")
    if graph.edge_count != int(meta.get("edge_count", graph.edge_count)):
        raise GraphError("edge count does not match graph meta")
    return graph

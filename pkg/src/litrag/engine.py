"""Retrieval orchestration and answer synthesis for the three modes.

Vector mode pulls top-k chunks from the embedding index, graph mode
pulls triplets and provenance passages from the property graph, and
hybrid mode merges both result sets by identity key before a single
combined generation call. Answers cite numbered source passages with
``[n]`` markers that map back to chunk ids.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import EngineError
from .prompts import load_prompt
from .property_graph import (
    GraphHit,
    GraphHitKind,
    GraphRetrievalParams,
    PropertyGraph,
    graph_retrieve,
)
from .providers import ChatMessage, ChatModel, Embedder, user_message
from .vector_index import VectorIndex, vector_retrieve

REFUSAL_TEXT = "insufficient context"

_CITATION_MARKER = re.compile(r"\[(\d+)\]")


class RetrievalMode(str, Enum):
    VECTOR = "vector"
    GRAPH = "graph"
    HYBRID = "hybrid"


class ContextKind(str, Enum):
    CHUNK = "chunk"
    TRIPLET = "triplet"


@dataclass(frozen=True)
class ContextItem:
    """One scored evidence item handed to generation."""

    kind: ContextKind
    text: str
    score: float
    chunk_ids: tuple[str, ...]
    doc_ids: tuple[str, ...]

    def identity_key(self) -> tuple[str, str]:
        """Dedup key: chunk items by chunk_id, triplet items by text."""
        if self.kind is ContextKind.CHUNK:
            return (self.kind.value, self.chunk_ids[0])
        return (self.kind.value, self.text)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "text": self.text,
            "score": self.score,
            "chunk_ids": list(self.chunk_ids),
            "doc_ids": list(self.doc_ids),
        }


@dataclass(frozen=True)
class RetrievedContext:
    mode: RetrievalMode
    items: tuple[ContextItem, ...]
    query: str

    def chunk_items(self) -> list[ContextItem]:
        return [item for item in self.items if item.kind is ContextKind.CHUNK]

    def triplet_items(self) -> list[ContextItem]:
        return [item for item in self.items if item.kind is ContextKind.TRIPLET]

    def as_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "query": self.query,
            "items": [item.as_dict() for item in self.items],
        }


@dataclass(frozen=True)
class Answer:
    """Generated answer plus the evidence and bookkeeping behind it.

    ``trace`` carries wall-time and provider call counts; timings are
    excluded from the canonical form so repeated runs stay byte-stable.
    """

    text: str
    mode: RetrievalMode
    contexts: RetrievedContext
    citations: tuple[tuple[str, str], ...]
    trace: dict = field(default_factory=dict)

    def canonical_dict(self) -> dict:
        stable_trace = {
            k: v for k, v in self.trace.items() if not k.endswith("_seconds")
        }
        return {
            "text": self.text,
            "mode": self.mode.value,
            "contexts": self.contexts.as_dict(),
            "citations": [list(c) for c in self.citations],
            "trace": stable_trace,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True)


@dataclass(frozen=True)
class EngineConfig:
    top_k: int = 5
    top_k_nodes: int = 4
    path_depth: int = 1
    max_synonyms: int = 10
    context_budget: int = 24_000
    doc_filter: frozenset[str] | None = None

    def __post_init__(self) -> None:
        for name in ("top_k", "top_k_nodes", "path_depth", "max_synonyms"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.context_budget < 1_000:
            raise ValueError("context_budget must be >= 1000")
        if self.doc_filter is not None and not isinstance(self.doc_filter, frozenset):
            object.__setattr__(self, "doc_filter", frozenset(self.doc_filter))

    def graph_params(self) -> GraphRetrievalParams:
        return GraphRetrievalParams(
            top_k_nodes=self.top_k_nodes,
            path_depth=self.path_depth,
            max_synonyms=self.max_synonyms,
        )


def sort_items(items: Sequence[ContextItem]) -> list[ContextItem]:
    return sorted(items, key=lambda it: (-it.score, it.text, it.kind.value))


def merge_items(*groups: Sequence[ContextItem]) -> list[ContextItem]:
    """Deduplicate by identity key, keeping max score and unioned provenance."""
    merged: dict[tuple[str, str], ContextItem] = {}
    for group in groups:
        for item in group:
            key = item.identity_key()
            prev = merged.get(key)
            if prev is None:
                merged[key] = item
            else:
                merged[key] = ContextItem(
                    kind=item.kind,
                    text=item.text,
                    score=max(prev.score, item.score),
                    chunk_ids=tuple(sorted(set(prev.chunk_ids) | set(item.chunk_ids))),
                    doc_ids=tuple(sorted(set(prev.doc_ids) | set(item.doc_ids))),
                )
    return sort_items(merged.values())


def truncate_items(
    items: Sequence[ContextItem], context_budget: int
) -> list[ContextItem]:
    """Drop items until total text length fits the budget.

    Lowest scores go first; at equal score triplets go before chunks,
    since passages carry more recoverable context than single facts.
    """
    kept = list(items)
    # Two stable sorts: later-sorting texts drop first within a score/kind
    # tier, so the kept set is a prefix of the display order.
    drop_order = sorted(range(len(kept)), key=lambda i: kept[i].text, reverse=True)
    drop_order.sort(
        key=lambda i: (kept[i].score, 0 if kept[i].kind is ContextKind.TRIPLET else 1)
    )
    total = sum(len(item.text) for item in kept)
    dropped: set[int] = set()
    for idx in drop_order:
        if total <= context_budget:
            break
        dropped.add(idx)
        total -= len(kept[idx].text)
    return [item for i, item in enumerate(kept) if i not in dropped]


def _graph_hit_to_item(hit: GraphHit, graph: PropertyGraph) -> ContextItem:
    chunk_ids = tuple(sorted(hit.provenance))
    doc_ids = tuple(sorted({graph.chunks[cid].doc_id for cid in chunk_ids}))
    kind = ContextKind.CHUNK if hit.kind is GraphHitKind.CHUNK else ContextKind.TRIPLET
    return ContextItem(kind, hit.text, float(hit.score), chunk_ids, doc_ids)


def _apply_doc_filter(
    items: Sequence[ContextItem],
    doc_filter: frozenset[str],
    graph: PropertyGraph,
) -> list[ContextItem]:
    """Restrict provenance to the filtered documents; drop emptied items."""
    filtered: list[ContextItem] = []
    for item in items:
        kept_chunks = tuple(
            cid for cid in item.chunk_ids if graph.chunks[cid].doc_id in doc_filter
        )
        if not kept_chunks:
            continue
        kept_docs = tuple(sorted({graph.chunks[cid].doc_id for cid in kept_chunks}))
        filtered.append(
            ContextItem(item.kind, item.text, item.score, kept_chunks, kept_docs)
        )
    return filtered


class Engine:
    """Stateless query engine over immutable indexes."""

    def __init__(
        self,
        vector_index: VectorIndex | None,
        graph: PropertyGraph | None,
        llm: ChatModel,
        embed: Embedder,
    ):
        self.vector_index = vector_index
        self.graph = graph
        self.llm = llm
        self.embed = embed

    # -- retrieval ----------------------------------------------------------

    def _vector_items(self, query: str, config: EngineConfig) -> list[ContextItem]:
        if self.vector_index is None:
            raise EngineError("no vector index loaded")
        hits = vector_retrieve(
            self.vector_index,
            query,
            config.top_k,
            self.embed,
            doc_filter=config.doc_filter,
        )
        return [
            ContextItem(
                ContextKind.CHUNK,
                hit.text,
                float(hit.score),
                (hit.chunk_id,),
                (hit.doc_id,),
            )
            for hit in hits
        ]

    def _graph_items(self, query: str, config: EngineConfig) -> list[ContextItem]:
        if self.graph is None:
            raise EngineError("no property graph loaded")
        hits = graph_retrieve(
            self.graph, query, config.graph_params(), self.llm, self.embed
        )
        items = [_graph_hit_to_item(hit, self.graph) for hit in hits]
        if config.doc_filter is not None:
            items = _apply_doc_filter(items, config.doc_filter, self.graph)
        return items

    def retrieve(
        self, query: str, mode: RetrievalMode, config: EngineConfig
    ) -> RetrievedContext:
        """Run one retrieval mode and truncate to the context budget."""
        if not query.strip():
            raise EngineError("query must be non-empty")
        if mode is RetrievalMode.VECTOR:
            items = sort_items(self._vector_items(query, config))
        elif mode is RetrievalMode.GRAPH:
            items = sort_items(self._graph_items(query, config))
        else:
            vector_part = self._vector_items(query, config)
            graph_part = self._graph_items(query, config)
            items = merge_items(vector_part, graph_part)
        items = truncate_items(items, config.context_budget)
        return RetrievedContext(mode=mode, items=tuple(items), query=query)

    # -- generation ---------------------------------------------------------

    def build_answer_messages(self, context: RetrievedContext) -> list[ChatMessage]:
        """Render the mode-specific answer prompt for a retrieved context."""
        chunks = context.chunk_items()
        sources = "\n\n".join(
            f"[{i}] {item.text}" for i, item in enumerate(chunks, start=1)
        )
        if context.mode is RetrievalMode.VECTOR:
            template = load_prompt("vector_answer")
            prompt = template.format(sources=sources, query=context.query)
        else:
            name = "graph_answer" if context.mode is RetrievalMode.GRAPH else "hybrid_answer"
            template = load_prompt(name)
            triplets = "\n".join(item.text for item in context.triplet_items())
            prompt = template.format(
                triplets=triplets, sources=sources, query=context.query
            )
        return user_message(prompt)

    def parse_citations(
        self, text: str, context: RetrievedContext
    ) -> tuple[tuple[str, str], ...]:
        """Map ``[n]`` markers back to (doc_id, chunk_id) of numbered chunks.

        Markers outside the numbered range are ignored; duplicates keep
        their first occurrence order.
        """
        chunks = context.chunk_items()
        citations: list[tuple[str, str]] = []
        for match in _CITATION_MARKER.finditer(text):
            n = int(match.group(1))
            if not 1 <= n <= len(chunks):
                continue
            item = chunks[n - 1]
            citation = (item.doc_ids[0], item.chunk_ids[0])
            if citation not in citations:
                citations.append(citation)
        return tuple(citations)

    def _stats_snapshot(self) -> dict[str, int]:
        totals = {"chat_calls": 0, "embed_calls": 0, "texts_embedded": 0}
        seen: set[int] = set()
        for provider in (self.llm, self.embed):
            stats = getattr(provider, "stats", None)
            if stats is None or id(stats) in seen:
                continue
            seen.add(id(stats))
            for key, value in stats.snapshot().items():
                totals[key] += value
        return totals

    def generate_answer(
        self, query: str, context: RetrievedContext, llm: ChatModel | None = None
    ) -> Answer:
        """Synthesize an answer from retrieved context.

        Empty context degrades to a refusal answer instead of an error,
        so the chatbot stays responsive on out-of-corpus questions.
        """
        llm = llm or self.llm
        before = self._stats_snapshot()
        start = time.perf_counter()
        if not context.items:
            return Answer(
                text=REFUSAL_TEXT,
                mode=context.mode,
                contexts=context,
                citations=(),
                trace={
                    "generate_seconds": 0.0,
                    "chat_calls": 0,
                    "embed_calls": 0,
                    "texts_embedded": 0,
                },
            )
        messages = self.build_answer_messages(context)
        text = llm.complete(messages, temperature=0.0)
        after = self._stats_snapshot()
        citations = self.parse_citations(text, context)
        return Answer(
            text=text,
            mode=context.mode,
            contexts=context,
            citations=citations,
            trace={
                "generate_seconds": time.perf_counter() - start,
                **{k: after[k] - before[k] for k in after},
            },
        )

    def answer_query(
        self, query: str, mode: RetrievalMode, config: EngineConfig
    ) -> Answer:
        """Retrieve then generate; trace carries per-stage time and calls."""
        before = self._stats_snapshot()
        start = time.perf_counter()
        context = self.retrieve(query, mode, config)
        retrieved_at = time.perf_counter()
        answer = self.generate_answer(query, context)
        after = self._stats_snapshot()
        trace = {
            "mode": mode.value,
            "retrieve_seconds": retrieved_at - start,
            "generate_seconds": answer.trace.get("generate_seconds", 0.0),
            "total_seconds": time.perf_counter() - start,
            **{k: after[k] - before[k] for k in after},
        }
        return Answer(
            text=answer.text,
            mode=answer.mode,
            contexts=answer.contexts,
            citations=answer.citations,
            trace=trace,
        )

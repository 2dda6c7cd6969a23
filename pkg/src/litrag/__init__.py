"""Hybrid retrieval-augmented generation over scientific literature.

Three retrieval modes over one corpus: embedding similarity (vector),
LLM-extracted knowledge graph traversal (graph), and their deduplicated
union (hybrid). Includes semantic chunking, synthetic test set
generation with annotation filtering, answer evaluation, a REST
service, and a CLI.
"""

from .engine import (
    Answer,
    ContextItem,
    ContextKind,
    Engine,
    EngineConfig,
    RetrievalMode,
    RetrievedContext,
)
from .errors import (
    AnnotationError,
    EmptyDocumentError,
    EngineError,
    EvalError,
    GraphError,
    IndexingError,
    IngestError,
    LitragError,
    MetricError,
    ProviderError,
    TestsetError,
)
from .ingest import Chunk, ChunkMethod, ChunkingConfig, Document, chunk_document, load_corpus
from .property_graph import GraphConfig, PropertyGraph, build_property_graph
from .providers import (
    ChatMessage,
    EmbeddingVector,
    HashEmbeddings,
    OpenAIProvider,
    ProviderConfig,
    ScriptedChatModel,
)
from .testset import Annotation, QaItem, TestScope, TestSet, Verdict
from .vector_index import VectorIndex, build_vector_index, vector_retrieve

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnnotationError",
    "Answer",
    "ChatMessage",
    "Chunk",
    "ChunkMethod",
    "ChunkingConfig",
    "ContextItem",
    "ContextKind",
    "Document",
    "EmbeddingVector",
    "EmptyDocumentError",
    "Engine",
    "EngineConfig",
    "EngineError",
    "EvalError",
    "GraphConfig",
    "GraphError",
    "HashEmbeddings",
    "IndexingError",
    "IngestError",
    "LitragError",
    "MetricError",
    "OpenAIProvider",
    "PropertyGraph",
    "ProviderConfig",
    "ProviderError",
    "QaItem",
    "RetrievalMode",
    "RetrievedContext",
    "ScriptedChatModel",
    "TestScope",
    "TestSet",
    "TestsetError",
    "VectorIndex",
    "Verdict",
    "build_property_graph",
    "build_vector_index",
    "chunk_document",
    "load_corpus",
    "vector_retrieve",
]

"""Shared fixtures: deterministic corpora and scripted providers."""

from __future__ import annotations

import pytest

from litrag.ingest import Chunk, ChunkMethod, ChunkingConfig, chunk_corpus, document_from_text
from litrag.providers import ChatMessage, HashEmbeddings, render_messages


class KeywordChatModel:
    """Dispatches prompts to canned responses by substring rules.

    Rules are checked in registration order; a prompt matching none of
    them fails the test loudly. Responses may be strings or callables
    receiving the rendered prompt.
    """

    def __init__(self):
        self.rules: list[tuple[str, object]] = []
        self.prompts_seen: list[str] = []
        from litrag.providers import CallStats

        self.stats = CallStats()

    def rule(self, substring: str, response) -> "KeywordChatModel":
        self.rules.append((substring, response))
        return self

    def complete(self, messages, *, temperature: float = 0.0, max_tokens: int = 1024) -> str:
        self.stats.chat_calls += 1
        rendered = render_messages(messages)
        self.prompts_seen.append(rendered)
        for substring, response in self.rules:
            if substring in rendered:
                if callable(response):
                    return response(rendered)
                return response
        raise AssertionError(f"no rule matches prompt starting {rendered[:120]!r}")


@pytest.fixture
def embedder() -> HashEmbeddings:
    return HashEmbeddings(dim=32, seed=7)


DOC_BODIES = {
    "weeds.txt": (
        "Glyphosate inhibits the EPSPS enzyme in plants. "
        "Several weed species evolved glyphosate resistance through target site mutations. "
        "Resistant populations spread rapidly across farmland."
    ),
    "cover.txt": (
        "Cover crops suppress weed emergence by shading the soil. "
        "Rye residue releases allelopathic compounds. "
        "Integrated programs combine cover crops with reduced tillage."
    ),
    "beetles.txt": (
        "Flea beetles damage oilseed rape seedlings in spring. "
        "Neonicotinoid seed treatments were restricted in many regions. "
        "Growers now rely on pyrethroid sprays against beetle outbreaks."
    ),
}


@pytest.fixture
def small_corpus():
    """Three short documents with stable doc ids."""
    return [
        document_from_text(body, file_name=name)
        for name, body in sorted(DOC_BODIES.items())
    ]


@pytest.fixture
def small_chunks(small_corpus, embedder) -> list[Chunk]:
    """Sentence-per-chunk split of the small corpus (9 chunks)."""
    config = ChunkingConfig(method=ChunkMethod.SENTENCE)
    return chunk_corpus(small_corpus, config, embedder)


def make_chunk(chunk_id: str, doc_id: str, text: str) -> Chunk:
    """Bare chunk for tests that do not care about sentence spans."""
    return Chunk(
        chunk_id=chunk_id,
        doc_id=doc_id,
        sentence_range=(0, 1),
        text=text,
        method=ChunkMethod.SENTENCE,
    )


# One extraction per sentence chunk of the small corpus, keyed by a
# distinctive substring of the chunk text.
EXTRACTION_RULES = [
    ("Glyphosate inhibits the EPSPS enzyme", "(Glyphosate | inhibits | EPSPS enzyme)"),
    ("Several weed species evolved", "(weed species | evolved | glyphosate resistance)"),
    ("Resistant populations spread", "(resistant populations | spread across | farmland)"),
    ("Cover crops suppress weed emergence", "(cover crops | suppress | weed emergence)"),
    ("Rye residue releases", "(rye residue | releases | allelopathic compounds)"),
    ("Integrated programs combine", "(integrated programs | combine | cover crops)"),
    ("Flea beetles damage", "(flea beetles | damage | oilseed rape seedlings)"),
    ("Neonicotinoid seed treatments", "(neonicotinoid treatments | restricted in | many regions)"),
    ("Growers now rely", "(growers | rely on | pyrethroid sprays)"),
]

SYNONYM_RESPONSE = "glyphosate\nepsps enzyme\nresistance"


def extraction_model() -> KeywordChatModel:
    llm = KeywordChatModel()
    for substring, response in EXTRACTION_RULES:
        llm.rule(substring, response)
    return llm


@pytest.fixture
def built_indexes(small_chunks, embedder):
    """Vector index plus property graph over the small corpus."""
    from litrag.property_graph import GraphConfig, build_property_graph
    from litrag.vector_index import build_vector_index

    index = build_vector_index(small_chunks, embedder)
    graph = build_property_graph(
        small_chunks, GraphConfig(), extraction_model(), embedder
    )
    return index, graph


def user_prompt_text(messages: list[ChatMessage]) -> str:
    assert len(messages) == 1 and messages[0].role == "user"
    return messages[0].content

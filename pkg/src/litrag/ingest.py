"""Corpus loading, text normalization, and chunking.

Documents come in as pre-extracted plain text (one ``.txt`` per paper,
optionally with a ``<stem>.meta.json`` sidecar), get normalized, split
into sentences by a deterministic rule-based splitter, and grouped into
chunks by one of three methods:

- ``token``: greedy packing of whole sentences up to a token cap;
- ``sentence``: one chunk per sentence;
- ``semantic``: breakpoints where the cosine distance between adjacent
  sentence-window embeddings strictly exceeds a percentile threshold.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyDocumentError, IngestError
from .providers import Embedder, cosine_similarity

logger = logging.getLogger(__name__)


class ChunkMethod(str, Enum):
    TOKEN = "token"
    SENTENCE = "sentence"
    SEMANTIC = "semantic"


@dataclass(frozen=True)
class Document:
    """A normalized source document."""

    doc_id: str
    title: str
    body: str
    source_path: str
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    char_span: tuple[int, int]


@dataclass(frozen=True)
class Chunk:
    """A contiguous run of sentences; the unit of embedding and retrieval."""

    chunk_id: str
    doc_id: str
    sentence_range: tuple[int, int]
    text: str
    method: ChunkMethod


@dataclass(frozen=True)
class ChunkingConfig:
    """Chunking parameters; semantic defaults are buffer 1 / percentile 95."""

    buffer_size: int = 1
    breakpoint_percentile: float = 95.0
    max_tokens_fixed: int = 200
    method: ChunkMethod = ChunkMethod.SEMANTIC

    def __post_init__(self) -> None:
        if self.buffer_size < 0:
            raise ValueError("buffer_size must be >= 0")
        if not (0.0 < self.breakpoint_percentile <= 100.0):
            raise ValueError("breakpoint_percentile must be in (0, 100]")
        if self.max_tokens_fixed < 1:
            raise ValueError("max_tokens_fixed must be >= 1")


# ---------------------------------------------------------------------------
# Normalization and loading
# ---------------------------------------------------------------------------

_WHITESPACE_RUN = re.compile(r"\s+")


def normalize_text(raw: str) -> str:
    """NFC-normalize, drop control characters, collapse whitespace runs."""
    text = unicodedata.normalize("NFC", raw)
    text = "".join(
        ch for ch in text if ch.isspace() or unicodedata.category(ch) not in ("Cc", "Cf")
    )
    return _WHITESPACE_RUN.sub(" ", text).strip()


def _derive_doc_id(file_name: str, body: str) -> str:
    body_hash = hashlib.sha256(body.encode("utf-8")).hexdigest()
    return hashlib.sha256(f"{file_name}\0{body_hash}".encode("utf-8")).hexdigest()[:16]


def _load_sidecar(path: Path) -> dict[str, str]:
    sidecar = path.with_suffix(".meta.json")
    if not sidecar.exists():
        return {}
    try:
        raw = json.loads(sidecar.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"unreadable sidecar {sidecar}: {exc}") from exc
    metadata: dict[str, str] = {}
    for key, value in raw.items():
        if isinstance(value, list):
            metadata[key] = "; ".join(str(v) for v in value)
        else:
            metadata[key] = str(value)
    return metadata


def load_document(path: str | Path) -> Document:
    """Load one UTF-8 text file (pre-extracted from PDF upstream).

    The doc_id is the first 16 hex digits of sha256 over the file name and
    the body hash, so it is stable across machines and checkouts.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"unreadable file {path}: {exc}") from exc
    return document_from_text(raw, file_name=path.name, source_path=str(path), metadata=_load_sidecar(path))


def document_from_text(
    raw: str,
    *,
    file_name: str,
    source_path: str = "",
    metadata: dict[str, str] | None = None,
) -> Document:
    """Build a Document from already-loaded text (uploads, tests)."""
    body = normalize_text(raw)
    if not body:
        raise EmptyDocumentError(f"document {file_name!r} is empty after normalization")
    metadata = dict(metadata or {})
    title = metadata.get("title") or Path(file_name).stem
    return Document(
        doc_id=_derive_doc_id(file_name, body),
        title=title,
        body=body,
        source_path=source_path or file_name,
        metadata=metadata,
    )


def load_corpus(corpus_dir: str | Path) -> list[Document]:
    """Load every ``*.txt`` under a corpus directory, sorted by file name."""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise IngestError(f"corpus directory {corpus_dir} does not exist")
    docs = [load_document(p) for p in sorted(corpus_dir.glob("*.txt"))]
    if not docs:
        raise IngestError(f"no .txt documents found under {corpus_dir}")
    return docs


def write_manifest(documents: Sequence[Document], manifest_path: str | Path) -> None:
    """Write ``manifest.json``: one entry per document with its content hash."""
    entries = [
        {
            "doc_id": doc.doc_id,
            "source_path": Path(doc.source_path).name,
            "sha256": hashlib.sha256(doc.body.encode("utf-8")).hexdigest(),
            "title": doc.title,
        }
        for doc in documents
    ]
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")


def read_manifest(manifest_path: str | Path) -> list[dict[str, str]]:
    return json.loads(Path(manifest_path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Sentence splitting
# ---------------------------------------------------------------------------

# Common scientific-prose abbreviations that end with a period but do not
# terminate a sentence.
ABBREVIATIONS = (
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "no.",
    "fig.", "figs.", "eq.", "eqs.", "ref.", "refs.", "sec.", "tab.",
    "vol.", "ed.", "eds.", "ca.", "cf.", "vs.", "etc.", "e.g.", "i.e.",
    "et al.", "al.",
)

_TERMINATORS = frozenset(".!?")


def _ends_with_abbreviation(prefix: str) -> bool:
    """True when the prefix ends in a stoplisted abbreviation as a whole
    token ("in Fig." yes, "weeds." no despite ending in "eds.")."""
    lowered = prefix.lower()
    for abbr in ABBREVIATIONS:
        if not lowered.endswith(abbr):
            continue
        boundary = len(lowered) - len(abbr)
        if boundary == 0 or not lowered[boundary - 1].isalnum():
            return True
    return False


def split_sentences(body: str) -> list[Sentence]:
    """Split normalized text on ``. ! ?`` followed by whitespace and an
    uppercase letter or digit, skipping a fixed abbreviation stoplist.

    Terminal punctuation stays with its sentence; spans index into ``body``
    and jointly cover it except for the single spaces between sentences.
    """
    sentences: list[Sentence] = []
    start = 0
    i = 0
    n = len(body)
    while i < n:
        ch = body[i]
        if ch in _TERMINATORS:
            # Consume a run of terminators ("?!", "...") as one ending.
            while i + 1 < n and body[i + 1] in _TERMINATORS:
                i += 1
            j = i + 1
            while j < n and body[j].isspace():
                j += 1
            at_end = j >= n
            next_starts_sentence = not at_end and (body[j].isupper() or body[j].isdigit())
            is_boundary = at_end or (j > i + 1 and next_starts_sentence)
            if is_boundary and ch == "." and _ends_with_abbreviation(body[start : i + 1]):
                is_boundary = False
            if is_boundary:
                text = body[start : i + 1]
                sentences.append(Sentence(len(sentences), text, (start, i + 1)))
                start = j
                i = j
                continue
        i += 1
    if start < n:
        text = body[start:n]
        if text.strip():
            sentences.append(Sentence(len(sentences), text, (start, n)))
    return sentences


# ---------------------------------------------------------------------------
# Chunking
# ---------------------------------------------------------------------------


def _make_chunks(
    doc: Document,
    sentences: Sequence[Sentence],
    boundaries: Sequence[int],
    method: ChunkMethod,
) -> list[Chunk]:
    """Assemble chunks from breakpoint positions.

    ``boundaries`` holds sentence indexes i such that a chunk ends after
    sentence i (exclusive of the final sentence, which always ends a chunk).
    """
    chunks: list[Chunk] = []
    first = 0
    cut_after = sorted(set(boundaries))
    for last in [*cut_after, len(sentences) - 1]:
        members = sentences[first : last + 1]
        text = " ".join(s.text for s in members)
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}-{len(chunks):04d}",
                doc_id=doc.doc_id,
                sentence_range=(first, last),
                text=text,
                method=method,
            )
        )
        first = last + 1
    return chunks


def _require_sentences(doc: Document) -> list[Sentence]:
    sentences = split_sentences(doc.body)
    if not sentences:
        raise EmptyDocumentError(f"document {doc.doc_id} has no sentences")
    return sentences


def chunk_semantic(doc: Document, config: ChunkingConfig, embed: Embedder) -> list[Chunk]:
    """Semantic chunking via embedding-distance breakpoints.

    Each sentence i gets a window of sentences [i - buffer, i + buffer]
    (clipped); the window concatenations are embedded, adjacent windows
    compared by cosine distance, and a breakpoint placed wherever the
    distance strictly exceeds the linear-interpolation percentile of all
    distances. With percentile 100 the strict comparison can never fire,
    so the whole document is one chunk.
    """
    sentences = _require_sentences(doc)
    if len(sentences) == 1:
        return _make_chunks(doc, sentences, [], ChunkMethod.SEMANTIC)

    buffer = config.buffer_size
    windows = [
        " ".join(
            s.text
            for s in sentences[max(0, i - buffer) : min(len(sentences), i + buffer + 1)]
        )
        for i in range(len(sentences))
    ]
    vectors = embed.embed_texts(windows)
    distances = [
        1.0 - cosine_similarity(vectors[i].values, vectors[i + 1].values)
        for i in range(len(vectors) - 1)
    ]
    threshold = float(np.percentile(distances, config.breakpoint_percentile))
    boundaries = [i for i, d in enumerate(distances) if d > threshold]
    return _make_chunks(doc, sentences, boundaries, ChunkMethod.SEMANTIC)


def chunk_fixed(doc: Document, config: ChunkingConfig) -> list[Chunk]:
    """Token-cap baseline: greedily pack whole sentences up to the cap.

    A sentence longer than the cap becomes a chunk of its own.
    """
    sentences = _require_sentences(doc)
    cap = config.max_tokens_fixed
    boundaries: list[int] = []
    running = 0
    for i, sentence in enumerate(sentences):
        tokens = len(sentence.text.split())
        if running and running + tokens > cap:
            boundaries.append(i - 1)
            running = 0
        running += tokens
        if tokens > cap:
            boundaries.append(i)
            running = 0
    return _make_chunks(doc, sentences, [b for b in boundaries if b < len(sentences) - 1], ChunkMethod.TOKEN)


def chunk_sentences(doc: Document) -> list[Chunk]:
    """One chunk per sentence."""
    sentences = _require_sentences(doc)
    return _make_chunks(doc, sentences, list(range(len(sentences) - 1)), ChunkMethod.SENTENCE)


def chunk_document(
    doc: Document, config: ChunkingConfig, embed: Embedder | None = None
) -> list[Chunk]:
    """Chunk one document with the method named in the config."""
    if config.method is ChunkMethod.SEMANTIC:
        if embed is None:
            raise ValueError("semantic chunking requires an embedder")
        return chunk_semantic(doc, config, embed)
    if config.method is ChunkMethod.TOKEN:
        return chunk_fixed(doc, config)
    return chunk_sentences(doc)


def chunk_corpus(
    documents: Sequence[Document], config: ChunkingConfig, embed: Embedder | None = None
) -> list[Chunk]:
    """Chunk every document, concatenated in document order."""
    chunks: list[Chunk] = []
    for doc in documents:
        chunks.extend(chunk_document(doc, config, embed))
    return chunks

"""Synthetic question/answer test sets and annotation-based filtering.

Items are generated one per sampled chunk: the LLM writes a question
answerable from that chunk plus the reference answer. Human annotations
(three yes/no/unsure verdicts per item) then filter the set down to
items where every verdict is yes. Items without an annotation are also
removed, since nothing certifies them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import random
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

from .errors import AnnotationError, TestsetError
from .ingest import Chunk
from .prompts import load_prompt
from .providers import ChatMessage, ChatModel, user_message

logger = logging.getLogger(__name__)

GENERATION_ATTEMPTS = 3

ANNOTATION_HEADER = (
    "item_id",
    "context_related",
    "answer_from_context",
    "answer_complete",
    "annotator_id",
)


class TestScope(str, Enum):
    SINGLE_PAPER = "single_paper"
    MULTI_PAPER = "multi_paper"


class Verdict(str, Enum):
    YES = "yes"
    NO = "no"
    UNSURE = "unsure"


@dataclass(frozen=True)
class QaItem:
    item_id: str
    question: str
    answer: str
    context: str
    scope: TestScope
    source_doc_ids: tuple[str, ...]
    source_chunk_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if not (self.question.strip() and self.answer.strip() and self.context.strip()):
            raise TestsetError(f"item {self.item_id}: question/answer/context must be non-empty")
        if self.scope is TestScope.SINGLE_PAPER and len(self.source_doc_ids) != 1:
            raise TestsetError(f"item {self.item_id}: single-paper items need exactly one source doc")


@dataclass(frozen=True)
class Annotation:
    """Three verdicts answering: is the context related to the question,
    is the answer derived from the context, does the answer fully address
    the question."""

    item_id: str
    context_related: Verdict
    answer_from_context: Verdict
    answer_complete: Verdict
    annotator_id: str = ""

    def all_yes(self) -> bool:
        return (
            self.context_related is Verdict.YES
            and self.answer_from_context is Verdict.YES
            and self.answer_complete is Verdict.YES
        )


@dataclass(frozen=True)
class TestSet:
    items: tuple[QaItem, ...]
    scope: TestScope
    generator_model: str
    filtered: bool = False


@dataclass(frozen=True)
class QualityStats:
    """Annotation tallies plus the two headline percentages.

    Percentages are kept at full precision here; display rounding to one
    decimal happens in :func:`format_pct`.
    """

    total: int
    yes_context_related: int
    yes_answer_from_context: int
    yes_answer_complete: int

    @property
    def pct_context_related(self) -> float:
        return 100.0 * self.yes_context_related / self.total

    @property
    def pct_answer_from_context(self) -> float:
        return 100.0 * self.yes_answer_from_context / self.total

    @property
    def pct_answer_complete(self) -> float:
        return 100.0 * self.yes_answer_complete / self.total


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def build_testset_messages(context_text: str) -> list[ChatMessage]:
    template = load_prompt("testset_qa")
    return user_message(template.format(context=context_text))


def parse_qa_response(response: str) -> tuple[str, str] | None:
    """Extract the QUESTION:/ANSWER: pair; None when either is missing."""
    question_idx = response.find("QUESTION:")
    answer_idx = response.find("ANSWER:", question_idx + 1)
    if question_idx < 0 or answer_idx < 0:
        return None
    question = response[question_idx + len("QUESTION:") : answer_idx].strip()
    answer = response[answer_idx + len("ANSWER:") :].strip()
    if not question or not answer:
        return None
    return question, answer


def generate_testset(
    chunks: Sequence[Chunk],
    n: int,
    scope: TestScope,
    llm: ChatModel,
    *,
    doc_id: str | None = None,
    rng_seed: int = 0,
    generator_model: str = "",
) -> TestSet:
    """Generate up to n question/answer items over sampled chunk contexts.

    Single-paper scope samples chunks of the designated document only;
    multi-paper scope samples a document uniformly, then one of its
    chunks uniformly. A malformed LLM response is retried up to 3
    attempts per item, then the item is skipped with a warning, so the
    result can be shorter than n.
    """
    if n < 1:
        raise TestsetError("n must be >= 1")
    if not chunks:
        raise TestsetError("no chunks available for test set generation")

    by_doc: dict[str, list[Chunk]] = {}
    for chunk in chunks:
        by_doc.setdefault(chunk.doc_id, []).append(chunk)

    if scope is TestScope.SINGLE_PAPER:
        if doc_id is None:
            if len(by_doc) == 1:
                doc_id = next(iter(by_doc))
            else:
                raise TestsetError("single-paper scope needs a designated doc_id")
        if doc_id not in by_doc:
            raise TestsetError(f"no chunks for document {doc_id!r}")

    rng = random.Random(rng_seed)
    items: list[QaItem] = []
    for i in range(n):
        if scope is TestScope.SINGLE_PAPER:
            chunk = rng.choice(by_doc[doc_id])
        else:
            doc = rng.choice(sorted(by_doc))
            chunk = rng.choice(by_doc[doc])
        parsed: tuple[str, str] | None = None
        for _ in range(GENERATION_ATTEMPTS):
            response = llm.complete(build_testset_messages(chunk.text))
            parsed = parse_qa_response(response)
            if parsed is not None:
                break
        if parsed is None:
            logger.warning(
                "skipping item %d: no parseable question/answer after %d attempts",
                i,
                GENERATION_ATTEMPTS,
            )
            continue
        question, answer = parsed
        items.append(
            QaItem(
                item_id=f"qa-{len(items) + 1:04d}",
                question=question,
                answer=answer,
                context=chunk.text,
                scope=scope,
                source_doc_ids=(chunk.doc_id,),
                source_chunk_ids=(chunk.chunk_id,),
            )
        )
    return TestSet(
        items=tuple(items),
        scope=scope,
        generator_model=generator_model,
        filtered=False,
    )


# ---------------------------------------------------------------------------
# Annotation filtering and quality
# ---------------------------------------------------------------------------


def apply_annotations(testset: TestSet, annotations: Sequence[Annotation]) -> TestSet:
    """Keep only items whose annotation answers yes to all three questions.

    Unannotated items are removed: without verdicts nothing certifies
    them. Annotations must reference existing items, at most one per item.
    """
    known_ids = {item.item_id for item in testset.items}
    by_item: dict[str, Annotation] = {}
    for annotation in annotations:
        if annotation.item_id not in known_ids:
            raise AnnotationError(f"annotation references unknown item {annotation.item_id!r}")
        if annotation.item_id in by_item:
            raise AnnotationError(f"duplicate annotation for item {annotation.item_id!r}")
        by_item[annotation.item_id] = annotation
    retained = tuple(
        item
        for item in testset.items
        if item.item_id in by_item and by_item[item.item_id].all_yes()
    )
    return replace(testset, items=retained, filtered=True)


def testset_quality_report(annotations: Sequence[Annotation]) -> QualityStats:
    """Tally yes verdicts per question over an annotation set."""
    if not annotations:
        raise AnnotationError("cannot compute quality of zero annotations")
    return QualityStats(
        total=len(annotations),
        yes_context_related=sum(
            1 for a in annotations if a.context_related is Verdict.YES
        ),
        yes_answer_from_context=sum(
            1 for a in annotations if a.answer_from_context is Verdict.YES
        ),
        yes_answer_complete=sum(
            1 for a in annotations if a.answer_complete is Verdict.YES
        ),
    )


def format_pct(value: float) -> str:
    """One-decimal percentage with a trailing .0 trimmed: 94.2%, 92%."""
    text = f"{value:.1f}"
    if text.endswith(".0"):
        text = text[:-2]
    return text + "%"


def render_quality_markdown(stats: QualityStats, label: str = "test set") -> str:
    lines = [
        f"# Test set quality: {label}",
        "",
        f"Annotated items: {stats.total}",
        "",
        "| Question | Yes | Share |",
        "| --- | --- | --- |",
        f"| Context related to question | {stats.yes_context_related} | {format_pct(stats.pct_context_related)} |",
        f"| Answer derived from context | {stats.yes_answer_from_context} | {format_pct(stats.pct_answer_from_context)} |",
        f"| Answer fully addresses question | {stats.yes_answer_complete} | {format_pct(stats.pct_answer_complete)} |",
        "",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def testset_content_hash(items: Sequence[QaItem]) -> str:
    payload = json.dumps(
        [[i.item_id, i.question, i.answer, i.context] for i in items],
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def save_testset(
    testset: TestSet, path: str | Path, *, manifest_hash: str = ""
) -> None:
    """Write items as JSONL plus a sibling .meta.json file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for item in testset.items:
            fh.write(
                json.dumps(
                    {
                        "item_id": item.item_id,
                        "question": item.question,
                        "answer": item.answer,
                        "context": item.context,
                        "scope": item.scope.value,
                        "source_doc_ids": list(item.source_doc_ids),
                        "source_chunk_ids": list(item.source_chunk_ids),
                    }
                )
                + "\n"
            )
    meta = {
        "scope": testset.scope.value,
        "generator_model": testset.generator_model,
        "filtered": testset.filtered,
        "item_count": len(testset.items),
        "content_hash": testset_content_hash(testset.items),
        "manifest_hash": manifest_hash,
    }
    _meta_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_testset(path: str | Path) -> TestSet:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise TestsetError(f"cannot read test set {path}: {exc}") from exc
    items: list[QaItem] = []
    for line in lines:
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            items.append(
                QaItem(
                    item_id=row["item_id"],
                    question=row["question"],
                    answer=row["answer"],
                    context=row["context"],
                    scope=TestScope(row["scope"]),
                    source_doc_ids=tuple(row["source_doc_ids"]),
                    source_chunk_ids=tuple(row["source_chunk_ids"]),
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise TestsetError(f"malformed test set line in {path}: {exc}") from exc
    meta_path = _meta_path(path)
    scope = items[0].scope if items else TestScope.SINGLE_PAPER
    generator_model = ""
    filtered = False
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise TestsetError(f"cannot read test set meta {meta_path}: {exc}") from exc
        scope = TestScope(meta.get("scope", scope.value))
        generator_model = meta.get("generator_model", "")
        filtered = bool(meta.get("filtered", False))
    return TestSet(
        items=tuple(items),
        scope=scope,
        generator_model=generator_model,
        filtered=filtered,
    )


def read_annotations(path: str | Path) -> list[Annotation]:
    """Read the annotations CSV; verdicts are case-insensitive on read."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != ANNOTATION_HEADER:
                raise AnnotationError(
                    f"annotations file {path} must have header {','.join(ANNOTATION_HEADER)}"
                )
            rows = list(reader)
    except OSError as exc:
        raise AnnotationError(f"cannot read annotations {path}: {exc}") from exc
    annotations: list[Annotation] = []
    for row in rows:
        try:
            annotations.append(
                Annotation(
                    item_id=row["item_id"],
                    context_related=Verdict(row["context_related"].strip().lower()),
                    answer_from_context=Verdict(row["answer_from_context"].strip().lower()),
                    answer_complete=Verdict(row["answer_complete"].strip().lower()),
                    annotator_id=(row.get("annotator_id") or "").strip(),
                )
            )
        except (KeyError, ValueError, AttributeError) as exc:
            raise AnnotationError(f"malformed annotation row {row!r}: {exc}") from exc
    return annotations


def write_annotations(annotations: Sequence[Annotation], path: str | Path) -> None:
    """Write the annotations CSV with canonical lowercase verdicts."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANNOTATION_HEADER)
        for a in annotations:
            writer.writerow(
                [
                    a.item_id,
                    a.context_related.value,
                    a.answer_from_context.value,
                    a.answer_complete.value,
                    a.annotator_id,
                ]
            )

"""Answer scoring (cosine similarity, faithfulness) and run aggregation.

Faithfulness uses a two-stage LLM protocol: decompose the answer into
numbered atomic statements, then judge each statement SUPPORTED or
UNSUPPORTED strictly against the retrieved contexts. The score is the
supported fraction. Aggregation reports mean and population standard
deviation (divisor n), rendered at 3 decimals.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .engine import Engine, EngineConfig, RetrievalMode
from .errors import EvalError, MetricError, ProviderError
from .prompts import load_prompt
from .providers import ChatMessage, ChatModel, Embedder, cosine_similarity, user_message
from .testset import TestSet, testset_content_hash

logger = logging.getLogger(__name__)

METRIC_COSINE = "cosine_similarity"
METRIC_FAITHFULNESS = "faithfulness"

METRIC_RANGES = {
    METRIC_COSINE: (-1.0, 1.0),
    METRIC_FAITHFULNESS: (0.0, 1.0),
}

MODE_LABELS = {
    RetrievalMode.VECTOR: "VectorRAG",
    RetrievalMode.GRAPH: "GraphRAG",
    RetrievalMode.HYBRID: "HybridRAG",
}

_STATEMENT_LINE = re.compile(r"^\s*(\d+)[.)]\s*(.+?)\s*$")
_VERDICT_LINE = re.compile(r"^\s*(\d+)[.)]?\s*(SUPPORTED|UNSUPPORTED)\b", re.IGNORECASE)


@dataclass(frozen=True)
class MetricStats:
    mean: float
    sd: float
    n: int
    metric: str

    def __post_init__(self) -> None:
        if self.n < 1:
            raise MetricError("stats need at least one value")
        if self.sd < 0.0:
            raise MetricError("standard deviation cannot be negative")


@dataclass(frozen=True)
class ItemResult:
    item_id: str
    mode: RetrievalMode
    cosine: float
    faithfulness: float
    answer_text: str

    def as_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "mode": self.mode.value,
            "cosine": self.cosine,
            "faithfulness": self.faithfulness,
            "answer_text": self.answer_text,
        }


@dataclass(frozen=True)
class SkippedItem:
    item_id: str
    mode: RetrievalMode
    reason: str


@dataclass
class EvalReport:
    per_mode: dict[RetrievalMode, dict[str, MetricStats]]
    testset_ref: str
    config: dict
    items: list[ItemResult]
    skipped: list[SkippedItem] = field(default_factory=list)
    sd_kind: str = "population"


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def answer_similarity(generated: str, ground_truth: str, embed: Embedder) -> float:
    """Cosine similarity between the two texts' embeddings."""
    if not generated.strip() or not ground_truth.strip():
        raise MetricError("similarity needs two non-empty texts")
    vectors = embed.embed_texts([generated, ground_truth])
    return cosine_similarity(vectors[0].values, vectors[1].values)


def build_statements_messages(answer: str) -> list[ChatMessage]:
    return user_message(load_prompt("statements").format(answer=answer))


def parse_statements(response: str) -> list[str]:
    statements = []
    for line in response.splitlines():
        match = _STATEMENT_LINE.match(line)
        if match:
            statements.append(match.group(2))
    return statements


def build_judge_messages(statements: Sequence[str], contexts: Sequence[str]) -> list[ChatMessage]:
    rendered_statements = "\n".join(f"{i}. {s}" for i, s in enumerate(statements, start=1))
    rendered_contexts = "\n\n".join(contexts)
    return user_message(
        load_prompt("judge").format(
            contexts=rendered_contexts, statements=rendered_statements
        )
    )


def parse_verdicts(response: str, statement_count: int) -> list[bool]:
    """Per-statement SUPPORTED flags; any missing or conflicting number fails."""
    verdicts: dict[int, bool] = {}
    for line in response.splitlines():
        match = _VERDICT_LINE.match(line)
        if not match:
            continue
        number = int(match.group(1))
        supported = match.group(2).upper() == "SUPPORTED"
        if number in verdicts and verdicts[number] != supported:
            raise MetricError(f"conflicting verdicts for statement {number}")
        verdicts[number] = supported
    missing = [n for n in range(1, statement_count + 1) if n not in verdicts]
    if missing:
        raise MetricError(f"judge output lacks verdicts for statements {missing}")
    return [verdicts[n] for n in range(1, statement_count + 1)]


def faithfulness(answer: str, contexts: Sequence[str], llm: ChatModel) -> float:
    """Fraction of the answer's atomic statements supported by the contexts."""
    if not answer.strip():
        raise MetricError("faithfulness needs a non-empty answer")
    if not contexts or not any(c.strip() for c in contexts):
        raise MetricError("faithfulness needs non-empty contexts")
    decomposition = llm.complete(build_statements_messages(answer))
    statements = parse_statements(decomposition)
    if not statements:
        raise MetricError("answer decomposed into zero statements")
    judge_response = llm.complete(build_judge_messages(statements, contexts))
    verdicts = parse_verdicts(judge_response, len(statements))
    return sum(verdicts) / len(verdicts)


def aggregate(values: Sequence[float], metric: str) -> MetricStats:
    """Mean and population SD (divisor n) over per-item scores."""
    if metric not in METRIC_RANGES:
        raise MetricError(f"unknown metric {metric!r}")
    if not values:
        raise MetricError("cannot aggregate zero values")
    low, high = METRIC_RANGES[metric]
    for v in values:
        if not (low - 1e-9 <= v <= high + 1e-9):
            raise MetricError(f"{metric} value {v} outside [{low}, {high}]")
    n = len(values)
    mean = math.fsum(values) / n
    variance = math.fsum((v - mean) ** 2 for v in values) / n
    return MetricStats(mean=mean, sd=math.sqrt(variance), n=n, metric=metric)


# ---------------------------------------------------------------------------
# Evaluation runs
# ---------------------------------------------------------------------------


def _ordered_modes(modes: Sequence[RetrievalMode]) -> list[RetrievalMode]:
    order = [RetrievalMode.VECTOR, RetrievalMode.GRAPH, RetrievalMode.HYBRID]
    requested = set(modes)
    return [m for m in order if m in requested]


def compute_per_mode(items: Sequence[ItemResult]) -> dict[RetrievalMode, dict[str, MetricStats]]:
    per_mode: dict[RetrievalMode, dict[str, MetricStats]] = {}
    for mode in _ordered_modes(sorted({i.mode for i in items}, key=lambda m: m.value)):
        mode_items = sorted(
            (i for i in items if i.mode is mode), key=lambda i: i.item_id
        )
        per_mode[mode] = {
            METRIC_COSINE: aggregate([i.cosine for i in mode_items], METRIC_COSINE),
            METRIC_FAITHFULNESS: aggregate(
                [i.faithfulness for i in mode_items], METRIC_FAITHFULNESS
            ),
        }
    return per_mode


def run_evaluation(
    engine: Engine,
    testset: TestSet,
    modes: Sequence[RetrievalMode],
    config: EngineConfig,
) -> EvalReport:
    """Answer every test item in every mode and score both metrics.

    Only filtered (annotation-approved) test sets are accepted. A
    provider or metric failure on one item records a skip and moves on,
    so long runs survive transient trouble.
    """
    if not testset.filtered:
        raise EvalError("evaluation requires a filtered test set (run annotation filtering first)")
    if not testset.items:
        raise EvalError("test set has no items")
    if not modes:
        raise EvalError("no retrieval modes requested")

    results: list[ItemResult] = []
    skipped: list[SkippedItem] = []
    items = sorted(testset.items, key=lambda i: i.item_id)
    for mode in _ordered_modes(modes):
        for item in items:
            try:
                answer = engine.answer_query(item.question, mode, config)
                cosine = answer_similarity(answer.text, item.answer, engine.embed)
                context_texts = [c.text for c in answer.contexts.items]
                faith = faithfulness(answer.text, context_texts, engine.llm)
            except (ProviderError, MetricError) as exc:
                logger.warning("skipping %s in mode %s: %s", item.item_id, mode.value, exc)
                skipped.append(SkippedItem(item.item_id, mode, str(exc)))
                continue
            results.append(
                ItemResult(
                    item_id=item.item_id,
                    mode=mode,
                    cosine=cosine,
                    faithfulness=faith,
                    answer_text=answer.text,
                )
            )
    if not results:
        raise EvalError("every item evaluation failed; nothing to aggregate")
    return EvalReport(
        per_mode=compute_per_mode(results),
        testset_ref=testset_content_hash(testset.items),
        config=_config_snapshot(config),
        items=results,
        skipped=skipped,
    )


def _config_snapshot(config: EngineConfig) -> dict:
    return {
        "top_k": config.top_k,
        "top_k_nodes": config.top_k_nodes,
        "path_depth": config.path_depth,
        "max_synonyms": config.max_synonyms,
        "context_budget": config.context_budget,
        "doc_filter": sorted(config.doc_filter) if config.doc_filter else None,
    }


# ---------------------------------------------------------------------------
# Rendering and persistence
# ---------------------------------------------------------------------------


def render_report_markdown(report: EvalReport) -> str:
    """Markdown table with modes as rows and metric mean/SD columns."""
    lines = [
        "# Evaluation report",
        "",
        f"Test set: {report.testset_ref}",
        f"Items scored: {len(report.items)}; skipped: {len(report.skipped)}",
        f"SD kind: {report.sd_kind} (divisor n)",
        "",
        "| Approach | Cosine Similarity Mean | Cosine Similarity SD. | Faithfulness Mean | Faithfulness SD. |",
        "| --- | --- | --- | --- | --- |",
    ]
    for mode, stats in report.per_mode.items():
        cosine = stats[METRIC_COSINE]
        faith = stats[METRIC_FAITHFULNESS]
        lines.append(
            f"| {MODE_LABELS[mode]} | {cosine.mean:.3f} | {cosine.sd:.3f} "
            f"| {faith.mean:.3f} | {faith.sd:.3f} |"
        )
    lines += [
        "",
        "Faithfulness scores depend on the judging model and prompt texts;",
        "compare only runs produced with identical settings.",
        "",
    ]
    return "\n".join(lines)


def report_as_dict(report: EvalReport) -> dict:
    return {
        "per_mode": {
            mode.value: {
                metric: {"mean": s.mean, "sd": s.sd, "n": s.n}
                for metric, s in stats.items()
            }
            for mode, stats in report.per_mode.items()
        },
        "testset_ref": report.testset_ref,
        "config": report.config,
        "sd_kind": report.sd_kind,
        "item_count": len(report.items),
        "skipped": [
            {"item_id": s.item_id, "mode": s.mode.value, "reason": s.reason}
            for s in report.skipped
        ],
    }


def save_eval_report(report: EvalReport, run_dir: str | Path) -> None:
    """Write report.json, report.md, and items.jsonl under run_dir."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "report.json").write_text(
        json.dumps(report_as_dict(report), indent=2) + "\n", encoding="utf-8"
    )
    (run_dir / "report.md").write_text(render_report_markdown(report), encoding="utf-8")
    with open(run_dir / "items.jsonl", "w", encoding="utf-8") as fh:
        for item in report.items:
            fh.write(json.dumps(item.as_dict()) + "\n")


def load_eval_report(run_dir: str | Path) -> EvalReport:
    """Reload a saved report and verify stats match the per-item records."""
    run_dir = Path(run_dir)
    try:
        data = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
        item_lines = (run_dir / "items.jsonl").read_text(encoding="utf-8").splitlines()
    except (OSError, json.JSONDecodeError) as exc:
        raise EvalError(f"cannot load report from {run_dir}: {exc}") from exc
    items = [
        ItemResult(
            item_id=row["item_id"],
            mode=RetrievalMode(row["mode"]),
            cosine=float(row["cosine"]),
            faithfulness=float(row["faithfulness"]),
            answer_text=row["answer_text"],
        )
        for row in (json.loads(line) for line in item_lines if line.strip())
    ]
    recomputed = compute_per_mode(items)
    stored: dict[RetrievalMode, dict[str, MetricStats]] = {}
    for mode_value, stats in data["per_mode"].items():
        mode = RetrievalMode(mode_value)
        stored[mode] = {
            metric: MetricStats(
                mean=float(s["mean"]), sd=float(s["sd"]), n=int(s["n"]), metric=metric
            )
            for metric, s in stats.items()
        }
    if stored != recomputed:
        raise EvalError("report stats do not match the per-item records")
    return EvalReport(
        per_mode=stored,
        testset_ref=data["testset_ref"],
        config=data.get("config", {}),
        items=items,
        skipped=[
            SkippedItem(s["item_id"], RetrievalMode(s["mode"]), s["reason"])
            for s in data.get("skipped", [])
        ],
        sd_kind=data.get("sd_kind", "population"),
    )

"""REST service exposing ingestion, index builds, chat sessions, and
evaluation runs over the query engine.

Index builds and evaluations run as background jobs polled through
``/api/jobs``; queries always read an immutable engine snapshot, so a
running build never blocks or corrupts in-flight chats. Sessions are
persisted as JSONL append logs under ``state/sessions/`` and survive
restarts.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .engine import Answer, Engine, EngineConfig, RetrievalMode
from .errors import EngineError, IngestError, LitragError, ProviderError
from .evaluation import report_as_dict, run_evaluation, save_eval_report
from .ingest import Chunk, ChunkingConfig, chunk_document, document_from_text
from .property_graph import (
    GraphConfig,
    PropertyGraph,
    build_property_graph,
    load_property_graph,
    save_property_graph,
)
from .providers import ChatModel, Embedder
from .testset import load_testset
from .vector_index import (
    VectorIndex,
    build_vector_index,
    load_vector_index,
    save_vector_index,
)

logger = logging.getLogger(__name__)

SNIPPET_CHARS = 200

BUILD_MODES = ("vector", "graph")


@dataclass(frozen=True)
class ServiceConfig:
    state_dir: Path = Path("state")
    index_dir: Path | None = None  # defaults to <state_dir>/index
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    engine_defaults: EngineConfig = field(default_factory=EngineConfig)
    cors_origin: str | None = None


@dataclass
class Job:
    job_id: str
    kind: str
    state: str = "pending"  # pending | running | done | failed
    progress: float = 0.0
    error: str | None = None
    result: dict | None = None

    def as_dict(self) -> dict:
        body = {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
        }
        if self.error is not None:
            body["error"] = self.error
        if self.result is not None:
            body["result"] = self.result
        return body


@dataclass
class Session:
    session_id: str
    created_at: str
    mode: RetrievalMode
    doc_filter: tuple[str, ...] | None
    turns: list[dict] = field(default_factory=list)


@dataclass(frozen=True)
class EngineSnapshot:
    """Immutable view the query path reads; swapped whole by builds."""

    vector_index: VectorIndex | None
    graph: PropertyGraph | None


class DocumentIn(BaseModel):
    filename: str
    text: str


class BuildIn(BaseModel):
    modes: list[str] = ["vector", "graph"]


class SessionIn(BaseModel):
    mode: str = "hybrid"
    doc_filter: list[str] | None = None


class MessageIn(BaseModel):
    query: str
    mode: str | None = None


class EvalIn(BaseModel):
    testset_path: str
    modes: list[str] = ["vector", "graph", "hybrid"]


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _parse_mode(value: str) -> RetrievalMode:
    try:
        return RetrievalMode(value)
    except ValueError:
        raise HTTPException(422, detail=f"unknown retrieval mode {value!r}")


class ServiceState:
    """All mutable service state plus its persistence paths."""

    def __init__(self, config: ServiceConfig, llm: ChatModel, embed: Embedder):
        self.config = config
        self.llm = llm
        self.embed = embed
        self.documents: dict[str, dict] = {}
        self.chunks_by_doc: dict[str, list[Chunk]] = {}
        self.chunk_texts: dict[tuple[str, str], str] = {}
        self.snapshot: EngineSnapshot | None = None
        self.jobs: dict[str, Job] = {}
        self.sessions: dict[str, Session] = {}
        self.lock = threading.RLock()
        self.build_lock = threading.Lock()
        self.sessions_dir = config.state_dir / "sessions"
        self.index_dir = config.index_dir or (config.state_dir / "index")
        self.eval_dir = config.state_dir / "eval"
        self._restore()

    # -- persistence ---------------------------------------------------------

    def _restore(self) -> None:
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        for path in sorted(self.sessions_dir.glob("*.jsonl")):
            try:
                lines = [
                    json.loads(line)
                    for line in path.read_text(encoding="utf-8").splitlines()
                    if line.strip()
                ]
            except (OSError, json.JSONDecodeError):
                logger.warning("skipping unreadable session log %s", path)
                continue
            if not lines:
                continue
            head, turns = lines[0], lines[1:]
            session = Session(
                session_id=head["session_id"],
                created_at=head["created_at"],
                mode=RetrievalMode(head["mode"]),
                doc_filter=tuple(head["doc_filter"]) if head.get("doc_filter") else None,
                turns=turns,
            )
            self.sessions[session.session_id] = session

        vector_index = None
        graph = None
        if (self.index_dir / "vector.meta.json").exists():
            vector_index = load_vector_index(self.index_dir)
            for chunk_id, doc_id, text in zip(
                vector_index.chunk_ids, vector_index.doc_ids, vector_index.texts
            ):
                self.chunk_texts[(doc_id, chunk_id)] = text
        if (self.index_dir / "graph.meta.json").exists():
            graph = load_property_graph(self.index_dir)
            for ref in graph.chunks.values():
                self.chunk_texts.setdefault((ref.doc_id, ref.chunk_id), ref.text)
        if vector_index is not None or graph is not None:
            self.snapshot = EngineSnapshot(vector_index=vector_index, graph=graph)

    def persist_session_line(self, session_id: str, record: dict) -> None:
        path = self.sessions_dir / f"{session_id}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    # -- helpers -------------------------------------------------------------

    def all_chunks(self) -> list[Chunk]:
        chunks: list[Chunk] = []
        for doc_id in sorted(self.chunks_by_doc):
            chunks.extend(self.chunks_by_doc[doc_id])
        return chunks

    def engine(self) -> Engine:
        if self.snapshot is None:
            raise HTTPException(409, detail="no index built yet")
        return Engine(self.snapshot.vector_index, self.snapshot.graph, self.llm, self.embed)

    def new_job(self, kind: str, prefix: str = "job") -> Job:
        job = Job(job_id=f"{prefix}-{uuid.uuid4().hex[:12]}", kind=kind)
        with self.lock:
            self.jobs[job.job_id] = job
        return job

    # -- background work -----------------------------------------------------

    def run_build(self, job: Job, modes: Sequence[str]) -> None:
        with self.build_lock:
            job.state = "running"
            try:
                chunks = self.all_chunks()
                previous = self.snapshot
                vector_index = previous.vector_index if previous else None
                graph = previous.graph if previous else None
                if "vector" in modes:
                    vector_index = build_vector_index(chunks, self.embed)
                job.progress = 0.5
                if "graph" in modes:
                    graph = build_property_graph(
                        chunks, GraphConfig(), self.llm, self.embed
                    )
                self.index_dir.mkdir(parents=True, exist_ok=True)
                if vector_index is not None and "vector" in modes:
                    save_vector_index(vector_index, self.index_dir)
                if graph is not None and "graph" in modes:
                    save_property_graph(graph, self.index_dir)
                with self.lock:
                    self.snapshot = EngineSnapshot(vector_index=vector_index, graph=graph)
                job.progress = 1.0
                job.state = "done"
                job.result = {
                    "chunks": len(chunks),
                    "vector": vector_index is not None,
                    "graph": graph is not None,
                }
            except (LitragError, ValueError) as exc:
                job.state = "failed"
                job.error = str(exc)

    def run_eval(self, job: Job, testset_path: str, modes: list[RetrievalMode]) -> None:
        job.state = "running"
        try:
            testset = load_testset(testset_path)
            engine = Engine(
                self.snapshot.vector_index if self.snapshot else None,
                self.snapshot.graph if self.snapshot else None,
                self.llm,
                self.embed,
            )
            report = run_evaluation(engine, testset, modes, self.config.engine_defaults)
            save_eval_report(report, self.eval_dir / job.job_id)
            job.result = report_as_dict(report)
            job.progress = 1.0
            job.state = "done"
        except (LitragError, ValueError) as exc:
            job.state = "failed"
            job.error = str(exc)


def _answer_payload(state: ServiceState, answer: Answer, mode: RetrievalMode) -> dict:
    citations = []
    for doc_id, chunk_id in answer.citations:
        text = state.chunk_texts.get((doc_id, chunk_id), "")
        citations.append(
            {
                "doc_id": doc_id,
                "chunk_id": chunk_id,
                "snippet": text[:SNIPPET_CHARS],
            }
        )
    return {
        "answer": answer.text,
        "mode": mode.value,
        "citations": citations,
        "contexts": [item.as_dict() for item in answer.contexts.items],
        "trace": answer.trace,
    }


def create_app(
    config: ServiceConfig | None = None,
    *,
    llm: ChatModel | None = None,
    embed: Embedder | None = None,
) -> FastAPI:
    """Assemble the application; providers default to the configured
    OpenAI-compatible backend unless injected."""
    config = config or ServiceConfig()
    if llm is None or embed is None:
        from .providers import OpenAIProvider, ProviderConfig

        provider = OpenAIProvider(ProviderConfig.from_env())
        llm = llm or provider
        embed = embed or provider
    state = ServiceState(config, llm, embed)
    app = FastAPI(title="litrag service")
    app.state.litrag = state

    if config.cors_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[config.cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    # -- health and corpus ---------------------------------------------------

    @app.get("/health")
    def health() -> dict:
        snapshot = state.snapshot
        return {
            "status": "ok",
            "index_loaded": bool(snapshot and snapshot.vector_index is not None),
            "graph_loaded": bool(snapshot and snapshot.graph is not None),
        }

    @app.post("/api/corpus/documents", status_code=201)
    def upload_document(body: DocumentIn) -> dict:
        try:
            doc = document_from_text(body.text, file_name=body.filename)
            chunks = chunk_document(doc, config.chunking, state.embed)
        except IngestError as exc:
            raise HTTPException(422, detail=str(exc))
        except ProviderError as exc:
            raise HTTPException(502, detail={"message": str(exc), "retryable": exc.retryable})
        with state.lock:
            state.documents[doc.doc_id] = {
                "doc_id": doc.doc_id,
                "title": doc.title,
                "filename": body.filename,
                "chunk_count": len(chunks),
            }
            state.chunks_by_doc[doc.doc_id] = chunks
            for chunk in chunks:
                state.chunk_texts[(doc.doc_id, chunk.chunk_id)] = chunk.text
        return {"doc_id": doc.doc_id, "chunk_count": len(chunks)}

    @app.get("/api/corpus/documents")
    def list_documents() -> dict:
        return {"documents": sorted(state.documents.values(), key=lambda d: d["doc_id"])}

    @app.get("/api/corpus/documents/{doc_id}/chunks/{chunk_id}")
    def get_chunk(doc_id: str, chunk_id: str) -> dict:
        text = state.chunk_texts.get((doc_id, chunk_id))
        if text is None:
            raise HTTPException(404, detail=f"unknown chunk {chunk_id!r} in document {doc_id!r}")
        return {"doc_id": doc_id, "chunk_id": chunk_id, "text": text}

    # -- index builds ----------------------------------------------------

    @app.post("/api/index/build", status_code=202)
    def build_index(body: BuildIn) -> dict:
        bad = [m for m in body.modes if m not in BUILD_MODES]
        if bad or not body.modes:
            raise HTTPException(422, detail=f"modes must be a non-empty subset of {list(BUILD_MODES)}")
        if not state.chunks_by_doc:
            raise HTTPException(409, detail="no documents uploaded; nothing to index")
        job = state.new_job("build")
        threading.Thread(
            target=state.run_build, args=(job, list(body.modes)), daemon=True
        ).start()
        return {"job_id": job.job_id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, detail=f"unknown job {job_id!r}")
        return job.as_dict()

    # -- chat sessions ---------------------------------------------------

    @app.post("/api/chat/sessions", status_code=201)
    def create_session(body: SessionIn) -> dict:
        mode = _parse_mode(body.mode)
        doc_filter: tuple[str, ...] | None = None
        if body.doc_filter:
            known = set(state.chunks_by_doc) | {d for d, _ in state.chunk_texts}
            missing = [d for d in body.doc_filter if d not in known]
            if missing:
                raise HTTPException(422, detail=f"unknown documents in doc_filter: {missing}")
            doc_filter = tuple(sorted(set(body.doc_filter)))
        session = Session(
            session_id=f"s-{uuid.uuid4().hex[:12]}",
            created_at=_now_iso(),
            mode=mode,
            doc_filter=doc_filter,
        )
        with state.lock:
            state.sessions[session.session_id] = session
        state.persist_session_line(
            session.session_id,
            {
                "session_id": session.session_id,
                "created_at": session.created_at,
                "mode": session.mode.value,
                "doc_filter": list(session.doc_filter) if session.doc_filter else None,
            },
        )
        return {"session_id": session.session_id}

    @app.get("/api/chat/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail=f"unknown session {session_id!r}")
        return {
            "session_id": session.session_id,
            "created_at": session.created_at,
            "mode": session.mode.value,
            "doc_filter": list(session.doc_filter) if session.doc_filter else None,
            "turns": session.turns,
        }

    @app.post("/api/chat/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageIn) -> dict:
        session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail=f"unknown session {session_id!r}")
        if not body.query.strip():
            raise HTTPException(422, detail="query must be non-empty")
        mode = _parse_mode(body.mode) if body.mode else session.mode
        engine = state.engine()
        engine_config = replace(
            config.engine_defaults,
            doc_filter=frozenset(session.doc_filter) if session.doc_filter else None,
        )
        try:
            answer = engine.answer_query(body.query, mode, engine_config)
        except ProviderError as exc:
            raise HTTPException(502, detail={"message": str(exc), "retryable": exc.retryable})
        except EngineError as exc:
            raise HTTPException(409, detail=str(exc))
        payload = _answer_payload(state, answer, mode)
        turn = {"query": body.query, "timestamp": _now_iso(), **payload}
        with state.lock:
            session.turns.append(turn)
        state.persist_session_line(session_id, turn)
        return payload

    # -- evaluation ------------------------------------------------------

    @app.post("/api/eval/run", status_code=202)
    def start_eval(body: EvalIn) -> dict:
        modes = [_parse_mode(m) for m in body.modes]
        if not Path(body.testset_path).exists():
            raise HTTPException(422, detail=f"test set file not found: {body.testset_path}")
        if state.snapshot is None:
            raise HTTPException(409, detail="no index built yet")
        job = state.new_job("eval", prefix="run")
        threading.Thread(
            target=state.run_eval, args=(job, body.testset_path, modes), daemon=True
        ).start()
        return {"run_id": job.job_id}

    @app.get("/api/eval/runs/{run_id}")
    def get_eval_run(run_id: str) -> dict:
        job = state.jobs.get(run_id)
        if job is None or job.kind != "eval":
            raise HTTPException(404, detail=f"unknown evaluation run {run_id!r}")
        if job.state == "done" and job.result is not None:
            return {"state": "done", **job.result}
        return job.as_dict() | {"state": job.state}

    return app

"""HTTP layer: corpus uploads, build jobs, chat sessions, evaluation runs."""

from __future__ import annotations

import time

from fastapi.testclient import TestClient

from litrag.engine import EngineConfig
from litrag.errors import ProviderError
from litrag.ingest import ChunkMethod, ChunkingConfig
from litrag.providers import HashEmbeddings
from litrag.service import ServiceConfig, create_app
from litrag.testset import QaItem, TestScope, TestSet, save_testset
from tests.conftest import (
    DOC_BODIES,
    EXTRACTION_RULES,
    KeywordChatModel,
    SYNONYM_RESPONSE,
)

ANSWER = "Glyphosate blocks the enzyme [1]."


def service_model(*, answer: object = ANSWER) -> KeywordChatModel:
    """One model serving both build-time extraction and query-time prompts.

    Query-time rules go first: answer and judge prompts embed chunk texts,
    so a chunk-keyed extraction rule would otherwise shadow them.
    """
    llm = KeywordChatModel()
    llm.rule("List up to", SYNONYM_RESPONSE)
    llm.rule("Break the answer below", "1. Statement one.\n2. Statement two.")
    llm.rule("Decide for each numbered statement", "1. SUPPORTED\n2. UNSUPPORTED")
    llm.rule("TRIPLETS:", answer)
    llm.rule("SOURCES:", answer)
    for substring, response in EXTRACTION_RULES:
        llm.rule(substring, response)
    return llm


def make_client(tmp_path, llm: KeywordChatModel | None = None) -> TestClient:
    config = ServiceConfig(
        state_dir=tmp_path / "state",
        chunking=ChunkingConfig(method=ChunkMethod.SENTENCE),
    )
    app = create_app(
        config, llm=llm or service_model(), embed=HashEmbeddings(dim=32, seed=7)
    )
    return TestClient(app)


def upload_all(client: TestClient) -> dict[str, str]:
    ids: dict[str, str] = {}
    for name, body in sorted(DOC_BODIES.items()):
        response = client.post(
            "/api/corpus/documents", json={"filename": name, "text": body}
        )
        assert response.status_code == 201
        ids[name] = response.json()["doc_id"]
    return ids


def wait_for(client: TestClient, url: str, timeout: float = 10.0) -> dict:
    deadline = time.monotonic() + timeout
    body: dict = {}
    while time.monotonic() < deadline:
        body = client.get(url).json()
        if body.get("state") in ("done", "failed"):
            return body
        time.sleep(0.01)
    raise AssertionError(f"job at {url} did not finish: {body}")


def build_indexes(client: TestClient, modes: list[str] | None = None) -> dict:
    response = client.post(
        "/api/index/build", json={"modes": modes} if modes else {}
    )
    assert response.status_code == 202
    job = wait_for(client, f"/api/jobs/{response.json()['job_id']}")
    assert job["state"] == "done", job
    return job


def ready_client(tmp_path, llm: KeywordChatModel | None = None):
    client = make_client(tmp_path, llm)
    ids = upload_all(client)
    build_indexes(client)
    return client, ids


# ---------------------------------------------------------------------------
# Corpus endpoints
# ---------------------------------------------------------------------------


def test_health_before_any_build(tmp_path):
    client = make_client(tmp_path)
    body = client.get("/health").json()
    assert body == {"status": "ok", "index_loaded": False, "graph_loaded": False}


def test_upload_reports_doc_id_and_chunk_count(tmp_path):
    client = make_client(tmp_path)
    response = client.post(
        "/api/corpus/documents",
        json={"filename": "weeds.txt", "text": DOC_BODIES["weeds.txt"]},
    )
    assert response.status_code == 201
    body = response.json()
    assert body["chunk_count"] == 3
    listed = client.get("/api/corpus/documents").json()["documents"]
    assert [d["doc_id"] for d in listed] == [body["doc_id"]]
    assert listed[0]["title"] == "weeds"


def test_upload_rejects_blank_text(tmp_path):
    client = make_client(tmp_path)
    response = client.post(
        "/api/corpus/documents", json={"filename": "empty.txt", "text": "   "}
    )
    assert response.status_code == 422


def test_chunk_endpoint_serves_uploaded_text(tmp_path):
    client = make_client(tmp_path)
    ids = upload_all(client)
    doc_id = ids["weeds.txt"]
    body = client.get(f"/api/corpus/documents/{doc_id}/chunks/{doc_id}-0000").json()
    assert body["text"] == "Glyphosate inhibits the EPSPS enzyme in plants."


def test_chunk_endpoint_unknown_chunk_404(tmp_path):
    client = make_client(tmp_path)
    response = client.get("/api/corpus/documents/nope/chunks/nope-0000")
    assert response.status_code == 404


# ---------------------------------------------------------------------------
# Build jobs
# ---------------------------------------------------------------------------


def test_build_without_documents_409(tmp_path):
    client = make_client(tmp_path)
    response = client.post("/api/index/build", json={})
    assert response.status_code == 409


def test_build_rejects_unknown_modes(tmp_path):
    client = make_client(tmp_path)
    upload_all(client)
    assert client.post("/api/index/build", json={"modes": ["fancy"]}).status_code == 422
    assert client.post("/api/index/build", json={"modes": []}).status_code == 422


def test_build_job_lifecycle(tmp_path):
    client = make_client(tmp_path)
    upload_all(client)
    job = build_indexes(client)
    assert job["result"] == {"chunks": 9, "vector": True, "graph": True}
    assert job["progress"] == 1.0
    health = client.get("/health").json()
    assert health["index_loaded"] and health["graph_loaded"]


def test_vector_only_build(tmp_path):
    client = make_client(tmp_path)
    upload_all(client)
    job = build_indexes(client, modes=["vector"])
    assert job["result"] == {"chunks": 9, "vector": True, "graph": False}
    health = client.get("/health").json()
    assert health["index_loaded"] and not health["graph_loaded"]


def test_unknown_job_404(tmp_path):
    client = make_client(tmp_path)
    assert client.get("/api/jobs/job-missing").status_code == 404


# ---------------------------------------------------------------------------
# Chat sessions
# ---------------------------------------------------------------------------


def test_create_and_fetch_session(tmp_path):
    client = make_client(tmp_path)
    session_id = client.post("/api/chat/sessions", json={}).json()["session_id"]
    body = client.get(f"/api/chat/sessions/{session_id}").json()
    assert body["mode"] == "hybrid"
    assert body["doc_filter"] is None
    assert body["turns"] == []


def test_create_session_unknown_mode_422(tmp_path):
    client = make_client(tmp_path)
    response = client.post("/api/chat/sessions", json={"mode": "oracle"})
    assert response.status_code == 422


def test_create_session_unknown_doc_filter_422(tmp_path):
    client = make_client(tmp_path)
    response = client.post(
        "/api/chat/sessions", json={"doc_filter": ["not-a-doc"]}
    )
    assert response.status_code == 422


def test_message_unknown_session_404(tmp_path):
    client = make_client(tmp_path)
    response = client.post(
        "/api/chat/sessions/s-missing/messages", json={"query": "hi"}
    )
    assert response.status_code == 404


def test_message_before_build_409(tmp_path):
    client = make_client(tmp_path)
    upload_all(client)
    session_id = client.post("/api/chat/sessions", json={}).json()["session_id"]
    response = client.post(
        f"/api/chat/sessions/{session_id}/messages", json={"query": "hi"}
    )
    assert response.status_code == 409
    assert "no index" in response.json()["detail"]


def test_message_blank_query_422(tmp_path):
    client, _ = ready_client(tmp_path)
    session_id = client.post("/api/chat/sessions", json={}).json()["session_id"]
    response = client.post(
        f"/api/chat/sessions/{session_id}/messages", json={"query": "  "}
    )
    assert response.status_code == 422


def test_message_flow_citations_resolve(tmp_path):
    client, _ = ready_client(tmp_path)
    session_id = client.post("/api/chat/sessions", json={}).json()["session_id"]
    body = client.post(
        f"/api/chat/sessions/{session_id}/messages",
        json={"query": "What inhibits the EPSPS enzyme?"},
    ).json()
    assert body["answer"] == ANSWER
    assert body["mode"] == "hybrid"
    assert len(body["citations"]) == 1
    citation = body["citations"][0]
    chunk = client.get(
        f"/api/corpus/documents/{citation['doc_id']}/chunks/{citation['chunk_id']}"
    ).json()
    assert chunk["text"].startswith(citation["snippet"])
    kinds = {item["kind"] for item in body["contexts"]}
    assert kinds == {"chunk", "triplet"}
    turns = client.get(f"/api/chat/sessions/{session_id}").json()["turns"]
    assert len(turns) == 1
    assert turns[0]["answer"] == ANSWER


def test_message_mode_override(tmp_path):
    client, _ = ready_client(tmp_path)
    session_id = client.post("/api/chat/sessions", json={}).json()["session_id"]
    body = client.post(
        f"/api/chat/sessions/{session_id}/messages",
        json={"query": "What inhibits the EPSPS enzyme?", "mode": "vector"},
    ).json()
    assert body["mode"] == "vector"
    assert {item["kind"] for item in body["contexts"]} == {"chunk"}
    response = client.post(
        f"/api/chat/sessions/{session_id}/messages",
        json={"query": "again?", "mode": "psychic"},
    )
    assert response.status_code == 422


def test_doc_filter_restricts_context(tmp_path):
    client, ids = ready_client(tmp_path)
    weeds = ids["weeds.txt"]
    session_id = client.post(
        "/api/chat/sessions", json={"mode": "vector", "doc_filter": [weeds]}
    ).json()["session_id"]
    body = client.post(
        f"/api/chat/sessions/{session_id}/messages",
        json={"query": "What inhibits the EPSPS enzyme?"},
    ).json()
    assert body["contexts"], "filtered retrieval returned nothing"
    for item in body["contexts"]:
        assert item["doc_ids"] == [weeds]
    assert body["citations"][0]["doc_id"] == weeds


def test_graph_mode_without_graph_409(tmp_path):
    client = make_client(tmp_path)
    upload_all(client)
    build_indexes(client, modes=["vector"])
    session_id = client.post(
        "/api/chat/sessions", json={"mode": "graph"}
    ).json()["session_id"]
    response = client.post(
        f"/api/chat/sessions/{session_id}/messages", json={"query": "anything?"}
    )
    assert response.status_code == 409
    assert "graph" in response.json()["detail"]


def test_provider_failure_maps_to_502(tmp_path):
    def explode(prompt: str) -> str:
        raise ProviderError("backend unavailable", retryable=True)

    llm = KeywordChatModel()
    llm.rule("SOURCES:", explode)
    for substring, response in EXTRACTION_RULES:
        llm.rule(substring, response)
    client, _ = ready_client(tmp_path, llm)
    session_id = client.post(
        "/api/chat/sessions", json={"mode": "vector"}
    ).json()["session_id"]
    response = client.post(
        f"/api/chat/sessions/{session_id}/messages", json={"query": "anything?"}
    )
    assert response.status_code == 502
    detail = response.json()["detail"]
    assert detail["retryable"] is True
    assert "unavailable" in detail["message"]


def test_sessions_and_index_survive_restart(tmp_path):
    client, ids = ready_client(tmp_path)
    session_id = client.post("/api/chat/sessions", json={}).json()["session_id"]
    client.post(
        f"/api/chat/sessions/{session_id}/messages",
        json={"query": "What inhibits the EPSPS enzyme?"},
    )

    reborn = make_client(tmp_path)
    health = reborn.get("/health").json()
    assert health["index_loaded"] and health["graph_loaded"]
    body = reborn.get(f"/api/chat/sessions/{session_id}").json()
    assert len(body["turns"]) == 1
    assert body["turns"][0]["answer"] == ANSWER
    # Chunk texts come back from the persisted index files.
    weeds = ids["weeds.txt"]
    chunk = reborn.get(f"/api/corpus/documents/{weeds}/chunks/{weeds}-0000").json()
    assert chunk["text"] == "Glyphosate inhibits the EPSPS enzyme in plants."
    # The restored snapshot still answers queries.
    answer = reborn.post(
        f"/api/chat/sessions/{session_id}/messages",
        json={"query": "How do cover crops suppress weeds?"},
    ).json()
    assert answer["answer"] == ANSWER
    assert len(reborn.get(f"/api/chat/sessions/{session_id}").json()["turns"]) == 2


# ---------------------------------------------------------------------------
# Evaluation runs
# ---------------------------------------------------------------------------


def eval_testset_file(tmp_path, ids: dict[str, str]) -> str:
    items = (
        QaItem(
            item_id="qa-0001",
            question="What inhibits the EPSPS enzyme?",
            answer="Glyphosate inhibits the EPSPS enzyme.",
            context="Glyphosate inhibits the EPSPS enzyme in plants.",
            scope=TestScope.MULTI_PAPER,
            source_doc_ids=(ids["weeds.txt"],),
            source_chunk_ids=(f"{ids['weeds.txt']}-0000",),
        ),
        QaItem(
            item_id="qa-0002",
            question="How do cover crops suppress weeds?",
            answer="They shade the soil.",
            context="Cover crops suppress weed emergence by shading the soil.",
            scope=TestScope.MULTI_PAPER,
            source_doc_ids=(ids["cover.txt"],),
            source_chunk_ids=(f"{ids['cover.txt']}-0000",),
        ),
    )
    testset = TestSet(
        items=items,
        scope=TestScope.MULTI_PAPER,
        generator_model="scripted",
        filtered=True,
    )
    path = tmp_path / "testset.jsonl"
    save_testset(testset, path)
    return str(path)


def test_eval_run_flow(tmp_path):
    client, ids = ready_client(tmp_path)
    path = eval_testset_file(tmp_path, ids)
    response = client.post("/api/eval/run", json={"testset_path": path})
    assert response.status_code == 202
    run_id = response.json()["run_id"]
    body = wait_for(client, f"/api/eval/runs/{run_id}")
    assert body["state"] == "done"
    assert body["item_count"] == 6
    assert set(body["per_mode"]) == {"vector", "graph", "hybrid"}
    for stats in body["per_mode"].values():
        assert stats["faithfulness"]["mean"] == 0.5
        assert stats["faithfulness"]["n"] == 2
    # Report files land under the state directory for later inspection.
    run_dir = tmp_path / "state" / "eval" / run_id
    assert (run_dir / "report.md").exists()


def test_eval_missing_testset_422(tmp_path):
    client, _ = ready_client(tmp_path)
    response = client.post(
        "/api/eval/run", json={"testset_path": str(tmp_path / "absent.jsonl")}
    )
    assert response.status_code == 422


def test_eval_before_build_409(tmp_path):
    client = make_client(tmp_path)
    ids = upload_all(client)
    path = eval_testset_file(tmp_path, ids)
    response = client.post("/api/eval/run", json={"testset_path": path})
    assert response.status_code == 409


def test_eval_unknown_run_404(tmp_path):
    client = make_client(tmp_path)
    assert client.get("/api/eval/runs/run-missing").status_code == 404


def test_build_job_is_not_an_eval_run(tmp_path):
    client = make_client(tmp_path)
    upload_all(client)
    response = client.post("/api/index/build", json={})
    job_id = response.json()["job_id"]
    wait_for(client, f"/api/jobs/{job_id}")
    assert client.get(f"/api/eval/runs/{job_id}").status_code == 404


def test_engine_defaults_flow_into_eval(tmp_path):
    client, ids = ready_client(tmp_path)
    path = eval_testset_file(tmp_path, ids)
    run_id = client.post(
        "/api/eval/run", json={"testset_path": path, "modes": ["vector"]}
    ).json()["run_id"]
    body = wait_for(client, f"/api/eval/runs/{run_id}")
    assert body["state"] == "done"
    assert body["config"]["top_k"] == EngineConfig().top_k
    assert list(body["per_mode"]) == ["vector"]

"""Command-line interface: exit codes, output shapes, config precedence."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

import litrag.cli
from litrag.cli import main
from litrag.ingest import document_from_text
from litrag.providers import HashEmbeddings
from litrag.testset import (
    Annotation,
    QaItem,
    TestScope,
    TestSet,
    Verdict,
    load_testset,
    save_testset,
    write_annotations,
)
from tests.conftest import DOC_BODIES, EXTRACTION_RULES, KeywordChatModel, SYNONYM_RESPONSE

ANSWER = "Glyphosate blocks the enzyme [1]."
QA_RESPONSE = "QUESTION: What practice is described?\nANSWER: A field management practice."


@pytest.fixture
def workdir(tmp_path, monkeypatch) -> Path:
    """Isolated cwd with a corpus/ directory and no LITRAG_* env vars."""
    for name in (
        "LITRAG_BASE_URL",
        "LITRAG_API_KEY",
        "LITRAG_CHAT_MODEL",
        "LITRAG_EMBED_MODEL",
        "LITRAG_BIND",
        "LITRAG_CORS_ORIGIN",
    ):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for name, body in DOC_BODIES.items():
        (corpus / name).write_text(body, encoding="utf-8")
    return tmp_path


def scripted_cli_model() -> KeywordChatModel:
    llm = KeywordChatModel()
    llm.rule("List up to", SYNONYM_RESPONSE)
    llm.rule("Break the answer below", "1. Statement one.\n2. Statement two.")
    llm.rule("Decide for each numbered statement", "1. SUPPORTED\n2. UNSUPPORTED")
    llm.rule("TRIPLETS:", ANSWER)
    llm.rule("SOURCES:", ANSWER)
    llm.rule("QUESTION: <the question>", QA_RESPONSE)
    for substring, response in EXTRACTION_RULES:
        llm.rule(substring, response)
    return llm


@pytest.fixture
def scripted_providers(monkeypatch) -> KeywordChatModel:
    llm = scripted_cli_model()
    monkeypatch.setattr(
        litrag.cli, "make_providers", lambda cfg: (llm, HashEmbeddings(dim=32, seed=7))
    )
    return llm


def write_config(workdir: Path, text: str) -> None:
    (workdir / "litrag.toml").write_text(text, encoding="utf-8")


SENTENCE_CONFIG = '[chunking]\nmethod = "sentence"\n'


def weeds_doc_id() -> str:
    return document_from_text(DOC_BODIES["weeds.txt"], file_name="weeds.txt").doc_id


# ---------------------------------------------------------------------------
# config show and precedence
# ---------------------------------------------------------------------------


def test_config_show_defaults(workdir, capsys):
    assert main(["config", "show"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["provider"]["kind"] == "openai"
    assert body["provider"]["chat_model"] == "gpt-4o-mini"
    assert body["engine"]["top_k"] == 5
    assert body["chunking"]["method"] == "semantic"
    assert body["service"]["bind"] == "127.0.0.1:8080"


def test_config_show_redacts_api_key(workdir, monkeypatch, capsys):
    monkeypatch.setenv("LITRAG_API_KEY", "sk-supersecret")
    assert main(["config", "show"]) == 0
    out = capsys.readouterr().out
    assert "sk-supersecret" not in out
    assert json.loads(out)["provider"]["api_key"] == "***"


def test_config_precedence_flags_env_file(workdir, monkeypatch, capsys):
    write_config(
        workdir,
        '[paths]\ncorpus_dir = "file_corpus"\nindex_dir = "file_index"\n'
        '[provider]\nchat_model = "file-model"\n',
    )
    monkeypatch.setenv("LITRAG_CHAT_MODEL", "env-model")
    assert main(["--index-dir", "flag_index", "config", "show"]) == 0
    body = json.loads(capsys.readouterr().out)
    # flag > env > file, and file wins where the upper layers are silent
    assert body["index_dir"] == "flag_index"
    assert body["provider"]["chat_model"] == "env-model"
    assert body["corpus_dir"] == "file_corpus"


def test_env_vars_reach_service_settings(workdir, monkeypatch, capsys):
    monkeypatch.setenv("LITRAG_BIND", "0.0.0.0:9001")
    monkeypatch.setenv("LITRAG_CORS_ORIGIN", "http://localhost:5173")
    assert main(["config", "show"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["service"] == {
        "bind": "0.0.0.0:9001",
        "cors_origin": "http://localhost:5173",
    }


def test_missing_explicit_config_is_pipeline_error(workdir, capsys):
    assert main(["--config", "absent.toml", "config", "show"]) == 2
    assert "config file not found" in capsys.readouterr().err


def test_unknown_config_key_rejected(workdir, capsys):
    write_config(workdir, '[paths]\nwarehouse = "x"\n')
    assert main(["config", "show"]) == 2
    assert "unknown config key paths.warehouse" in capsys.readouterr().err


def test_help_exits_zero(workdir, capsys):
    assert main(["--help"]) == 0
    assert "ingest, index, query, evaluate, serve" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# ingest and index build
# ---------------------------------------------------------------------------


def test_ingest_writes_manifest(workdir, capsys):
    assert main(["ingest"]) == 0
    out = capsys.readouterr().out
    assert "ingested 3 documents" in out
    manifest = json.loads((workdir / "index" / "manifest.json").read_text())
    assert [e["title"] for e in manifest] == ["beetles", "cover", "weeds"]


def test_ingest_missing_corpus_dir(workdir, capsys):
    assert main(["--corpus-dir", "nowhere", "ingest"]) == 2
    assert "error:" in capsys.readouterr().err


def test_index_build_reports_sizes(workdir, scripted_providers, capsys):
    write_config(workdir, SENTENCE_CONFIG)
    assert main(["index", "build"]) == 0
    out = capsys.readouterr().out
    assert "vector index: 9 chunks, dim 32" in out
    assert "property graph:" in out
    assert (workdir / "index" / "vector.meta.json").exists()
    assert (workdir / "index" / "graph.meta.json").exists()


def test_index_build_rejects_unknown_mode(workdir, scripted_providers, capsys):
    assert main(["index", "build", "--modes", "vector,fancy"]) == 1
    assert "usage error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# query
# ---------------------------------------------------------------------------


def built_workdir(workdir, capsys) -> None:
    write_config(workdir, SENTENCE_CONFIG)
    assert main(["index", "build"]) == 0
    capsys.readouterr()  # drop build output


def test_query_json_record(workdir, scripted_providers, capsys):
    built_workdir(workdir, capsys)
    assert main(["query", "--json", "What inhibits the EPSPS enzyme?"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["text"] == ANSWER
    assert body["mode"] == "hybrid"
    assert body["citations"], "expected at least one resolved citation"
    assert all(not key.endswith("_seconds") for key in body["trace"])


def test_query_plain_output_lists_sources(workdir, scripted_providers, capsys):
    built_workdir(workdir, capsys)
    assert main(["query", "--mode", "vector", "What inhibits the EPSPS enzyme?"]) == 0
    out = capsys.readouterr().out
    assert out.startswith(ANSWER)
    assert "Sources:" in out
    assert weeds_doc_id() in out


def test_query_doc_filter_and_top_k(workdir, scripted_providers, capsys):
    built_workdir(workdir, capsys)
    weeds = weeds_doc_id()
    assert (
        main(
            [
                "query",
                "--json",
                "--mode",
                "vector",
                "--doc",
                weeds,
                "--top-k",
                "2",
                "What inhibits the EPSPS enzyme?",
            ]
        )
        == 0
    )
    body = json.loads(capsys.readouterr().out)
    items = body["contexts"]["items"]
    assert 0 < len(items) <= 2
    for item in items:
        assert item["doc_ids"] == [weeds]


def test_query_before_build_fails(workdir, scripted_providers, capsys):
    assert main(["query", "anything?"]) == 2
    assert "no index found" in capsys.readouterr().err


def test_query_json_error_record(workdir, scripted_providers, capsys):
    assert main(["query", "--json", "anything?"]) == 2
    # First stderr line is the machine-readable record; the plain
    # `error:` line from the exit-code handler follows it.
    record = json.loads(capsys.readouterr().err.splitlines()[0])
    assert record["type"] == "EngineError"
    assert "no index" in record["error"]


def test_query_unknown_mode_is_usage_error(workdir, scripted_providers, capsys):
    assert main(["query", "--mode", "psychic", "anything?"]) == 1
    assert "usage error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# test set commands
# ---------------------------------------------------------------------------


def test_testset_generate_filter_quality(workdir, scripted_providers, capsys):
    write_config(workdir, SENTENCE_CONFIG)
    assert (
        main(
            [
                "testset",
                "generate",
                "--scope",
                "multi",
                "-n",
                "4",
                "--out",
                "ts.jsonl",
                "--seed",
                "3",
            ]
        )
        == 0
    )
    assert "wrote 4 items to ts.jsonl" in capsys.readouterr().out
    generated = load_testset("ts.jsonl")
    assert len(generated.items) == 4
    assert not generated.filtered

    def verdicts(item_id: str, *values: str) -> Annotation:
        related, grounded, complete = (Verdict(v) for v in values)
        return Annotation(item_id, related, grounded, complete, annotator_id="a1")

    write_annotations(
        [
            verdicts("qa-0001", "yes", "yes", "yes"),
            verdicts("qa-0002", "yes", "no", "yes"),
            verdicts("qa-0003", "unsure", "yes", "yes"),
            verdicts("qa-0004", "yes", "yes", "yes"),
        ],
        "ann.csv",
    )
    assert (
        main(
            [
                "testset",
                "filter",
                "--in",
                "ts.jsonl",
                "--annotations",
                "ann.csv",
                "--out",
                "filtered.jsonl",
            ]
        )
        == 0
    )
    assert "retained 2 of 4 items" in capsys.readouterr().out
    filtered = load_testset("filtered.jsonl")
    assert [i.item_id for i in filtered.items] == ["qa-0001", "qa-0004"]
    assert filtered.filtered

    assert main(["testset", "quality", "--annotations", "ann.csv"]) == 0
    out = capsys.readouterr().out
    assert "| Context related to question |" in out
    assert "75%" in out


def test_testset_generate_requires_existing_corpus(workdir, scripted_providers, capsys):
    assert (
        main(
            [
                "--corpus-dir",
                "nowhere",
                "testset",
                "generate",
                "--scope",
                "multi",
                "-n",
                "2",
                "--out",
                "ts.jsonl",
            ]
        )
        == 2
    )


# ---------------------------------------------------------------------------
# evaluation and serve
# ---------------------------------------------------------------------------


def filtered_testset_file(path: Path) -> None:
    weeds = weeds_doc_id()
    items = (
        QaItem(
            item_id="qa-0001",
            question="What inhibits the EPSPS enzyme?",
            answer="Glyphosate inhibits the EPSPS enzyme.",
            context="Glyphosate inhibits the EPSPS enzyme in plants.",
            scope=TestScope.MULTI_PAPER,
            source_doc_ids=(weeds,),
            source_chunk_ids=(f"{weeds}-0000",),
        ),
    )
    save_testset(
        TestSet(items, TestScope.MULTI_PAPER, "scripted", filtered=True), path
    )


def test_eval_run_prints_report(workdir, scripted_providers, capsys):
    built_workdir(workdir, capsys)
    filtered_testset_file(workdir / "ts.jsonl")
    assert (
        main(
            [
                "eval",
                "run",
                "--testset",
                "ts.jsonl",
                "--out",
                "evalout",
                "--run-id",
                "r1",
            ]
        )
        == 0
    )
    out = capsys.readouterr().out
    assert "report written to evalout/r1" in out
    assert "| VectorRAG |" in out
    assert "| GraphRAG |" in out
    assert "| HybridRAG |" in out
    assert (workdir / "evalout" / "r1" / "report.md").exists()
    assert (workdir / "evalout" / "r1" / "items.jsonl").exists()


def test_eval_run_rejects_unfiltered_testset(workdir, scripted_providers, capsys):
    built_workdir(workdir, capsys)
    weeds = weeds_doc_id()
    items = (
        QaItem(
            item_id="qa-0001",
            question="What inhibits the EPSPS enzyme?",
            answer="Glyphosate inhibits the EPSPS enzyme.",
            context="ctx",
            scope=TestScope.MULTI_PAPER,
            source_doc_ids=(weeds,),
            source_chunk_ids=(f"{weeds}-0000",),
        ),
    )
    save_testset(
        TestSet(items, TestScope.MULTI_PAPER, "scripted", filtered=False),
        workdir / "raw.jsonl",
    )
    assert main(["eval", "run", "--testset", "raw.jsonl"]) == 2
    assert "filtered" in capsys.readouterr().err


def test_serve_rejects_bad_bind(workdir, capsys):
    assert main(["serve", "--bind", "nohost"]) == 1
    assert "invalid bind address" in capsys.readouterr().err

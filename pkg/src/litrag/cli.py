"""Command-line interface over every pipeline stage.

Exit codes: 0 on success, 1 on usage errors, 2 on pipeline errors. The
``--json`` flags emit machine-readable output for scripting.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import click

from .config import CliConfig, load_config
from .engine import Engine, RetrievalMode
from .errors import EngineError, LitragError
from .evaluation import render_report_markdown, run_evaluation, save_eval_report
from .ingest import chunk_corpus, load_corpus, write_manifest
from .property_graph import (
    GraphConfig,
    PropertyGraph,
    build_property_graph,
    load_property_graph,
    save_property_graph,
)
from .providers import ChatModel, Embedder, HashEmbeddings, OpenAIProvider, StaticChatModel
from .testset import (
    TestScope,
    apply_annotations,
    generate_testset,
    load_testset,
    read_annotations,
    render_quality_markdown,
    save_testset,
    testset_quality_report,
)
from .vector_index import VectorIndex, build_vector_index, load_vector_index, save_vector_index

SCOPES = {"single": TestScope.SINGLE_PAPER, "multi": TestScope.MULTI_PAPER}


def make_providers(config: CliConfig) -> tuple[ChatModel, Embedder]:
    """Build the chat and embedding backends for the resolved config.

    The "mock" provider kind runs fully offline with hash embeddings and
    a fixed chat response; useful for smoke runs without credentials.
    """
    if config.provider_kind == "mock":
        return StaticChatModel(), HashEmbeddings()
    provider = OpenAIProvider(config.provider)
    return provider, provider


def load_indexes(config: CliConfig) -> tuple[VectorIndex | None, PropertyGraph | None]:
    vector = None
    graph = None
    if (config.index_dir / "vector.meta.json").exists():
        vector = load_vector_index(config.index_dir)
    if (config.index_dir / "graph.meta.json").exists():
        graph = load_property_graph(config.index_dir)
    if vector is None and graph is None:
        raise EngineError(f"no index found under {config.index_dir}; run `litrag index build`")
    return vector, graph


def _parse_modes(raw: str) -> list[RetrievalMode]:
    modes = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            modes.append(RetrievalMode(part))
        except ValueError:
            raise click.UsageError(f"unknown mode {part!r}; choose from vector, graph, hybrid")
    if not modes:
        raise click.UsageError("at least one mode is required")
    return modes


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Path to litrag.toml.")
@click.option("--corpus-dir", type=click.Path(), default=None, help="Directory of .txt documents.")
@click.option("--index-dir", type=click.Path(), default=None, help="Directory for persisted indexes.")
@click.option("--state-dir", type=click.Path(), default=None, help="Directory for service state.")
@click.pass_context
def cli(ctx: click.Context, config_path, corpus_dir, index_dir, state_dir) -> None:
    """Literature RAG pipeline: ingest, index, query, evaluate, serve."""
    ctx.obj = load_config(
        config_path,
        overrides={
            "corpus_dir": corpus_dir,
            "index_dir": index_dir,
            "state_dir": state_dir,
        },
    )


@cli.group()
def config() -> None:
    """Inspect resolved configuration."""


@config.command("show")
@click.pass_obj
def config_show(cfg: CliConfig) -> None:
    """Print the fully resolved configuration as JSON."""
    click.echo(json.dumps(cfg.display_dict(), indent=2))


@cli.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False), required=False)
@click.pass_obj
def ingest(cfg: CliConfig, directory) -> None:
    """Load a corpus directory and write its manifest."""
    corpus_dir = Path(directory) if directory else cfg.corpus_dir
    documents = load_corpus(corpus_dir)
    manifest_path = cfg.index_dir / "manifest.json"
    write_manifest(documents, manifest_path)
    click.echo(f"ingested {len(documents)} documents from {corpus_dir}")
    click.echo(f"manifest written to {manifest_path}")


@cli.group()
def index() -> None:
    """Build and manage retrieval indexes."""


@index.command("build")
@click.option("--modes", default="vector,graph", show_default=True, help="Comma-separated: vector,graph.")
@click.pass_obj
def index_build(cfg: CliConfig, modes: str) -> None:
    """Chunk the corpus and build the requested indexes."""
    wanted = {m.strip() for m in modes.split(",") if m.strip()}
    unknown = wanted - {"vector", "graph"}
    if unknown or not wanted:
        raise click.UsageError("modes must be a non-empty subset of vector,graph")
    llm, embed = make_providers(cfg)
    documents = load_corpus(cfg.corpus_dir)
    chunks = chunk_corpus(documents, cfg.chunking, embed)
    write_manifest(documents, cfg.index_dir / "manifest.json")
    if "vector" in wanted:
        vector = build_vector_index(chunks, embed)
        save_vector_index(vector, cfg.index_dir)
        click.echo(f"vector index: {len(vector)} chunks, dim {vector.dim}")
    if "graph" in wanted:
        graph = build_property_graph(chunks, GraphConfig(), llm, embed)
        save_property_graph(graph, cfg.index_dir)
        click.echo(
            f"property graph: {graph.node_count} nodes, {graph.edge_count} edges"
            + (f", {graph.extraction_warnings} extraction warnings" if graph.extraction_warnings else "")
        )


@cli.command()
@click.argument("query_text", metavar="QUERY")
@click.option("--mode", default="hybrid", show_default=True, help="vector, graph, or hybrid.")
@click.option("--doc", "doc_id", default=None, help="Restrict retrieval to one document.")
@click.option("--top-k", type=int, default=None, help="Chunks to retrieve in vector mode.")
@click.option("--json", "as_json", is_flag=True, help="Emit the full answer record as JSON.")
@click.pass_obj
def query(cfg: CliConfig, query_text: str, mode: str, doc_id, top_k, as_json: bool) -> None:
    """Answer one query against the built indexes."""
    retrieval_mode = _parse_modes(mode)[0]
    llm, embed = make_providers(cfg)
    try:
        vector, graph = load_indexes(cfg)
        engine = Engine(vector, graph, llm, embed)
        engine_config = cfg.engine
        if top_k is not None:
            engine_config = replace(engine_config, top_k=top_k)
        if doc_id is not None:
            engine_config = replace(engine_config, doc_filter=frozenset({doc_id}))
        answer = engine.answer_query(query_text, retrieval_mode, engine_config)
    except LitragError as exc:
        if as_json:
            click.echo(json.dumps({"error": str(exc), "type": type(exc).__name__}), err=True)
        raise
    if as_json:
        click.echo(json.dumps(answer.canonical_dict(), indent=2))
        return
    click.echo(answer.text)
    if answer.citations:
        click.echo("\nSources:")
        for doc, chunk in answer.citations:
            click.echo(f"  {doc} / {chunk}")


@cli.group()
def testset() -> None:
    """Generate, filter, and assess synthetic test sets."""


@testset.command("generate")
@click.option("--scope", type=click.Choice(sorted(SCOPES)), required=True)
@click.option("-n", "count", type=int, required=True, help="Number of items to generate.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--doc", "doc_id", default=None, help="Designated document for single scope.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_obj
def testset_generate(cfg: CliConfig, scope: str, count: int, out_path, doc_id, seed: int) -> None:
    """Generate question/answer items over sampled corpus chunks."""
    llm, embed = make_providers(cfg)
    documents = load_corpus(cfg.corpus_dir)
    chunks = chunk_corpus(documents, cfg.chunking, embed)
    result = generate_testset(
        chunks,
        count,
        SCOPES[scope],
        llm,
        doc_id=doc_id,
        rng_seed=seed,
        generator_model=cfg.provider.chat_model,
    )
    manifest_path = cfg.index_dir / "manifest.json"
    manifest_hash = ""
    if manifest_path.exists():
        manifest_hash = hashlib.sha256(manifest_path.read_bytes()).hexdigest()[:16]
    save_testset(result, out_path, manifest_hash=manifest_hash)
    click.echo(f"wrote {len(result.items)} items to {out_path}")


@testset.command("filter")
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--annotations", "annotations_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
def testset_filter(cfg: CliConfig, in_path, annotations_path, out_path) -> None:
    """Keep only items whose annotation is yes on all three questions."""
    original = load_testset(in_path)
    annotations = read_annotations(annotations_path)
    filtered = apply_annotations(original, annotations)
    save_testset(filtered, out_path)
    click.echo(f"retained {len(filtered.items)} of {len(original.items)} items -> {out_path}")


@testset.command("quality")
@click.option("--annotations", "annotations_path", type=click.Path(exists=True), required=True)
@click.option("--label", default="test set", show_default=True)
@click.pass_obj
def testset_quality(cfg: CliConfig, annotations_path, label: str) -> None:
    """Print annotation quality percentages for a test set."""
    annotations = read_annotations(annotations_path)
    stats = testset_quality_report(annotations)
    click.echo(render_quality_markdown(stats, label))


@cli.group(name="eval")
def eval_group() -> None:
    """Run retrieval-mode evaluations."""


@eval_group.command("run")
@click.option("--testset", "testset_path", type=click.Path(exists=True), required=True)
@click.option("--modes", default="vector,graph,hybrid", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default="eval", show_default=True)
@click.option("--run-id", default=None, help="Directory name for this run (default: timestamp).")
@click.pass_obj
def eval_run(cfg: CliConfig, testset_path, modes: str, out_dir, run_id) -> None:
    """Evaluate all modes on a filtered test set and write the report."""
    retrieval_modes = _parse_modes(modes)
    llm, embed = make_providers(cfg)
    vector, graph = load_indexes(cfg)
    engine = Engine(vector, graph, llm, embed)
    testset_obj = load_testset(testset_path)
    report = run_evaluation(engine, testset_obj, retrieval_modes, cfg.engine)
    run_id = run_id or time.strftime("run-%Y%m%d-%H%M%S")
    run_dir = Path(out_dir) / run_id
    save_eval_report(report, run_dir)
    click.echo(f"report written to {run_dir}")
    click.echo(render_report_markdown(report))


@cli.command()
@click.option("--bind", default=None, help="host:port to listen on (default 127.0.0.1:8080).")
@click.pass_obj
def serve(cfg: CliConfig, bind) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    bind = bind or cfg.bind
    host, _, port_text = bind.partition(":")
    if not host or not port_text.isdigit():
        raise click.UsageError(f"invalid bind address {bind!r}; expected host:port")
    llm, embed = make_providers(cfg)
    app = create_app(
        ServiceConfig(
            state_dir=cfg.state_dir,
            index_dir=cfg.index_dir,
            chunking=cfg.chunking,
            engine_defaults=cfg.engine,
            cors_origin=cfg.cors_origin,
        ),
        llm=llm,
        embed=embed,
    )
    uvicorn.run(app, host=host, port=int(port_text))


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False, prog_name="litrag")
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except LitragError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

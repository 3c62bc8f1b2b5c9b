"""Operator command line: serve, import, export, reindex, search, suggest,
stats. KB state lives in a data directory (``--data`` or REXKB_DATA) as a
single snapshot file kb.json.
"""
from __future__ import annotations

import json
import random
import sys
from pathlib import Path
from typing import Optional

import click

from . import config as config_mod
from . import store_io
from .engine import KnowledgeBase
from .errors import KnowledgeBaseError
from .kb_core import Role
from .sim_index import SimilarityIndex
from .suggester import SuggestionWeights

CLI_ACTOR = "cli"


def _snapshot_path(data_dir: str) -> Path:
    return Path(data_dir) / "kb.json"


def _open_kb(data_dir: str, schema: Optional[str], stopwords: Optional[str]) -> KnowledgeBase:
    meta = config_mod.load_meta_model(schema)
    words = config_mod.load_stopwords(stopwords)
    path = _snapshot_path(data_dir)
    if path.exists():
        kb = store_io.load_snapshot(path, meta=meta, stopwords=words)
    else:
        kb = KnowledgeBase(meta=meta, stopwords=words)
    # The CLI operates the store directly; it acts as a local administrator.
    if CLI_ACTOR not in {a.id for a in kb.list_actors()}:
        kb.register_actor(CLI_ACTOR, "CLI operator", Role.ADMIN)
    return kb


def _save_kb(kb: KnowledgeBase, data_dir: str) -> None:
    store_io.write_snapshot(kb, _snapshot_path(data_dir))


def _fail(exc: KnowledgeBaseError) -> None:
    click.echo(f"ERROR {exc.code}: {exc.message}", err=True)
    sys.exit(1)


@click.group()
@click.option(
    "--data",
    "data_dir",
    envvar="REXKB_DATA",
    default=".rexkb",
    show_default=True,
    help="Knowledge-base data directory.",
)
@click.option("--schema", "schema_file", default=None, help="Meta-model config file.")
@click.option("--stopwords", "stopword_file", default=None, help="Stopword list file.")
@click.pass_context
def main(ctx: click.Context, data_dir: str, schema_file, stopword_file) -> None:
    """Operating-experience knowledge base tooling."""
    ctx.ensure_object(dict)
    ctx.obj.update(data=data_dir, schema=schema_file, stopwords=stopword_file)


def _ctx_kb(ctx: click.Context) -> KnowledgeBase:
    return _open_kb(ctx.obj["data"], ctx.obj["schema"], ctx.obj["stopwords"])


@main.command("import")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def import_cmd(ctx: click.Context, source: str) -> None:
    """Bulk-import interchange JSON Lines from SOURCE."""
    try:
        kb = _ctx_kb(ctx)
        with open(source, "r", encoding="utf-8") as handle:
            report = store_io.bulk_import(kb, CLI_ACTOR, handle)
        _save_kb(kb, ctx.obj["data"])
    except KnowledgeBaseError as exc:
        _fail(exc)
        return
    for kind, count in sorted(report.accepted.items()):
        click.echo(f"accepted {kind}: {count}")
    for rejected in report.rejected:
        click.echo(
            f"rejected line {rejected.line}: {rejected.code} {rejected.message}"
        )
    click.echo(f"duration: {report.duration:.2f}s")
    if report.rejected:
        sys.exit(1)


@main.command("export")
@click.argument("target", type=click.Path(dir_okay=False, writable=True), required=False)
@click.pass_context
def export_cmd(ctx: click.Context, target: Optional[str]) -> None:
    """Export the KB as interchange JSON Lines to TARGET (default stdout)."""
    try:
        kb = _ctx_kb(ctx)
        lines = store_io.export_lines(kb, CLI_ACTOR)
    except KnowledgeBaseError as exc:
        _fail(exc)
        return
    text = "\n".join(lines) + ("\n" if lines else "")
    if target:
        Path(target).write_text(text, encoding="utf-8")
        click.echo(f"exported {len(lines)} records to {target}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.pass_context
def reindex(ctx: click.Context) -> None:
    """Rebuild the similarity index from element text and verify that the
    incremental index matches it on 100 sampled queries."""
    try:
        kb = _ctx_kb(ctx)
        rebuilt = SimilarityIndex.rebuild(
            kb.index.tokenizer,
            [
                (e.id, e.indexed_text(), e.element_type.value)
                for e in kb.elements_sorted()
            ],
        )
        rng = random.Random(0)
        vocabulary = sorted(rebuilt.terms())
        mismatches = 0
        for _ in range(100):
            if vocabulary:
                query = " ".join(
                    rng.choice(vocabulary) for _ in range(rng.randint(1, 3))
                )
            else:
                query = "essai"
            before = kb.index.query(query, 10)
            after = rebuilt.query(query, 10)
            if [h.doc_id for h in before] != [h.doc_id for h in after] or any(
                abs(a.score - b.score) > 1e-9 for a, b in zip(before, after)
            ):
                mismatches += 1
        if mismatches:
            click.echo(f"MISMATCH on {mismatches}/100 sampled queries", err=True)
            sys.exit(1)
        kb.index = rebuilt
        _save_kb(kb, ctx.obj["data"])
    except KnowledgeBaseError as exc:
        _fail(exc)
        return
    click.echo("equivalent")


@main.command()
@click.argument("query")
@click.option("--type", "element_type", default=None, help="Restrict to one element type.")
@click.option("-k", default=10, show_default=True, help="Number of results.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def search(ctx: click.Context, query: str, element_type, k: int, as_json: bool) -> None:
    """Cosine-ranked full-text search over indexed elements."""
    try:
        kb = _ctx_kb(ctx)
        kinds = [element_type] if element_type else None
        hits = kb.search(query, k, kinds)
    except KnowledgeBaseError as exc:
        _fail(exc)
        return
    if as_json:
        click.echo(
            json.dumps(
                [{"element": h.doc_id, "score": h.score} for h in hits],
                ensure_ascii=False,
            )
        )
        return
    for position, hit in enumerate(hits, start=1):
        element = kb.find_element(hit.doc_id)
        title = element.title if element else ""
        click.echo(f"{position:>2} {hit.score:.4f} {hit.doc_id} {title}")


@main.command()
@click.argument("element_id")
@click.option("-k", default=10, show_default=True, help="Number of suggestions.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def suggest(ctx: click.Context, element_id: str, k: int, as_json: bool) -> None:
    """Rank link suggestions for one element."""
    try:
        kb = _ctx_kb(ctx)
        suggestions = kb.suggest_links(element_id, k)
    except KnowledgeBaseError as exc:
        _fail(exc)
        return
    if as_json:
        click.echo(
            json.dumps(
                [
                    {
                        "candidate_target": s.candidate_target,
                        "link_type": s.link_type.value,
                        "score": s.score,
                        "breakdown": {
                            "text_score": s.breakdown.text_score,
                            "tag_score": s.breakdown.tag_score,
                            "type_prior": s.breakdown.type_prior,
                        },
                        "rank": s.rank,
                    }
                    for s in suggestions
                ],
                ensure_ascii=False,
            )
        )
        return
    for s in suggestions:
        click.echo(
            f"{s.rank:>2} {s.score:.4f} {s.link_type.value:<15} "
            f"{s.candidate_target} (text={s.breakdown.text_score:.4f} "
            f"tag={s.breakdown.tag_score:.4f} prior={s.breakdown.type_prior:.2f})"
        )


@main.command()
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def stats(ctx: click.Context, as_json: bool) -> None:
    """Counts per element type, link status and workflow state."""
    try:
        kb = _ctx_kb(ctx)
        counters = kb.stats()
    except KnowledgeBaseError as exc:
        _fail(exc)
        return
    if as_json:
        click.echo(json.dumps(counters, ensure_ascii=False, sort_keys=True))
        return
    click.echo("elements:")
    for name, count in counters["elements"].items():
        click.echo(f"  {name:<20} {count}")
    click.echo("links:")
    for name, count in counters["links"].items():
        click.echo(f"  {name:<20} {count}")
    click.echo("workflow:")
    for name, count in counters["workflow"].items():
        click.echo(f"  {name:<20} {count}")
    click.echo(f"ontology_items:        {counters['ontology_items']}")
    click.echo(f"indexed_documents:     {counters['indexed_documents']}")


@main.command()
@click.option("--host", default=None, help="Bind host (overrides config).")
@click.option("--port", default=None, type=int, help="Bind port (overrides config).")
@click.option("--tokens", "token_file", default=None, help="Bearer-token file.")
@click.option("--config", "config_file", default=None, help="Service config JSON.")
@click.pass_context
def serve(ctx: click.Context, host, port, token_file, config_file) -> None:
    """Start the HTTP service."""
    from . import http_api

    try:
        if config_file:
            service = config_mod.load_service_config(config_file)
        else:
            service = config_mod.ServiceConfig()
        service = config_mod.ServiceConfig(
            host=host or service.host,
            port=port or service.port,
            data_dir=service.data_dir or ctx.obj["data"],
            token_file=token_file or service.token_file,
            schema_file=service.schema_file or ctx.obj["schema"],
            stopword_file=service.stopword_file or ctx.obj["stopwords"],
            weights=service.weights,
        )
        http_api.serve(service)
    except KnowledgeBaseError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()

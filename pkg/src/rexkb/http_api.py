"""HTTP service exposing every engine operation.

Authentication is a static bearer-token map (token -> actor id); the role
matrix is enforced by the engine operations themselves, plus explicit Read
checks on the read endpoints. Responses reuse the interchange record format;
errors carry their stable machine code:

    NOT_FOUND and unknown ids            -> 404
    missing/unknown token                -> 401  (code PERMISSION_DENIED)
    role-matrix refusals                 -> 403
    validation / schema / payload errors -> 422
    lifecycle conflicts and duplicates   -> 409
"""
from __future__ import annotations

from typing import Any, Mapping, Optional

from fastapi import Depends, FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from . import store_io
from .engine import KnowledgeBase, coerce_element_type
from .errors import InvalidRequest, KnowledgeBaseError, PermissionDenied
from .kb_core import AccessAction
from .link_graph import Direction, FaitDossier, Link
from .rex_flow import FaitState, SimilarHit, TransferMetrics
from .suggester import Suggestion, SuggestionWeights

STATUS_BY_CODE = {
    "NOT_FOUND": 404,
    "UNKNOWN_ACTOR": 401,
    "PERMISSION_DENIED": 403,
    "EMPTY_TITLE": 422,
    "TEMPLATE_VIOLATION": 422,
    "UNKNOWN_TAG": 422,
    "UNKNOWN_PARENT": 422,
    "SCHEMA_VIOLATION": 422,
    "WRONG_TYPE": 422,
    "INVALID_REQUEST": 422,
    "MALFORMED_STREAM": 422,
    "UNKNOWN_REFERENCE": 422,
    "DUPLICATE_DOC_ID": 422,
    "DUPLICATE_SIBLING_LABEL": 409,
    "DUPLICATE_LINK": 409,
    "ALREADY_VALIDATED": 409,
    "ALREADY_DECIDED": 409,
    "ILLEGAL_TRANSITION": 409,
    "CONFLICT": 409,
    "VERSION_MISMATCH": 409,
    "IO_FAILURE": 500,
    "INTERNAL_ERROR": 500,
}


def _state_record(state: FaitState) -> dict:
    return store_io.fait_state_to_record(state)


def _link_record(link: Link) -> dict:
    return store_io.link_to_record(link)


def _dossier_record(dossier: FaitDossier) -> dict:
    return {
        "kind": "dossier",
        "fait": dossier.fait,
        "equipment": list(dossier.equipment),
        "activities": list(dossier.activities),
        "fundamentals": list(dossier.fundamentals),
        "prior_advisories": list(dossier.prior_advisories),
        "pathologies": list(dossier.pathologies),
        "sources": list(dossier.sources),
    }


def _similar_record(hit: SimilarHit) -> dict:
    return {"fait": hit.fait, "score": hit.score, "advisories": list(hit.advisories)}


def _suggestion_record(suggestion: Suggestion) -> dict:
    return {
        "candidate_target": suggestion.candidate_target,
        "link_type": suggestion.link_type.value,
        "score": suggestion.score,
        "breakdown": {
            "text_score": suggestion.breakdown.text_score,
            "tag_score": suggestion.breakdown.tag_score,
            "type_prior": suggestion.breakdown.type_prior,
        },
        "rank": suggestion.rank,
    }


def _metrics_record(metrics: TransferMetrics) -> dict:
    return {
        "transmission": metrics.transmission,
        "absorption_use": metrics.absorption_use,
        "enrichment": metrics.enrichment,
    }


def _parse_weights(raw: Optional[str]) -> Optional[SuggestionWeights]:
    if raw is None:
        return None
    parts = raw.split(",")
    if len(parts) != 3:
        raise InvalidRequest("weights must be three comma-separated numbers")
    try:
        text, tag, prior = (float(p) for p in parts)
    except ValueError:
        raise InvalidRequest(f"weights must be numeric, got {raw!r}")
    return SuggestionWeights(text, tag, prior)


def create_app(kb: KnowledgeBase, tokens: Mapping[str, str]) -> FastAPI:
    """Build the service around an engine and a token -> actor-id map."""
    app = FastAPI(title="rexkb", docs_url=None, redoc_url=None)
    app.state.kb = kb

    def authenticate(request: Request) -> str:
        header = request.headers.get("Authorization", "")
        scheme, _, token = header.partition(" ")
        actor_id = tokens.get(token) if scheme == "Bearer" else None
        if actor_id is None:
            exc = PermissionDenied("invalid or missing bearer token")
            exc.http_status = 401  # type: ignore[attr-defined]
            raise exc
        return actor_id

    actor_dep = Depends(authenticate)

    @app.exception_handler(KnowledgeBaseError)
    async def engine_error_handler(_request: Request, exc: KnowledgeBaseError):
        status = getattr(exc, "http_status", None) or STATUS_BY_CODE.get(exc.code, 500)
        return JSONResponse(
            status_code=status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    def _require_read(actor: str, element_type) -> None:
        if not kb.check_access(actor, AccessAction.READ, element_type):
            raise PermissionDenied(f"actor {actor!r} may not read")

    async def _json_body(request: Request) -> dict:
        try:
            payload = await request.json()
        except Exception:
            raise InvalidRequest("request body must be a JSON object")
        if not isinstance(payload, dict):
            raise InvalidRequest("request body must be a JSON object")
        return payload

    def _sections(payload: Mapping[str, Any]) -> list:
        sections = payload.get("sections", [])
        if not isinstance(sections, list):
            raise InvalidRequest("'sections' must be a list of [name, body] pairs")
        out = []
        for entry in sections:
            if isinstance(entry, dict):
                out.append((entry.get("name"), entry.get("body", "")))
            elif isinstance(entry, (list, tuple)) and len(entry) == 2:
                out.append((entry[0], entry[1]))
            else:
                raise InvalidRequest(f"malformed section entry: {entry!r}")
        return out

    # ------------------------------------------------------------- elements

    @app.post("/elements", status_code=201)
    async def create_element(request: Request, actor: str = actor_dep):
        payload = await _json_body(request)
        element = kb.create_element(
            actor,
            payload.get("element_type", ""),
            payload.get("title", ""),
            _sections(payload),
            payload.get("tags", []),
        )
        return store_io.element_to_record(element)

    @app.get("/elements")
    def list_elements(
        actor: str = actor_dep,
        element_type: Optional[str] = Query(default=None),
        limit: int = Query(default=50, ge=1),
    ):
        if element_type is not None:
            _require_read(actor, coerce_element_type(element_type))
        found = kb.list_elements(element_type, limit)
        return [store_io.element_to_record(e) for e in found]

    @app.get("/elements/{element_id}")
    def get_element(element_id: str, actor: str = actor_dep):
        _require_read(actor, kb.peek_element(element_id).element_type)
        return store_io.element_to_record(kb.get_element(element_id))

    @app.post("/elements/{element_id}/validate")
    def validate_element(element_id: str, actor: str = actor_dep):
        return store_io.element_to_record(kb.validate_element(actor, element_id))

    # ------------------------------------------------------------- ontology

    @app.post("/ontology", status_code=201)
    async def add_ontology_item(request: Request, actor: str = actor_dep):
        payload = await _json_body(request)
        label = payload.get("label", "")
        item = kb.add_ontology_item(actor, label, payload.get("parent"))
        return store_io.ontology_item_to_record(item)

    @app.get("/ontology/{item_id}/ancestors")
    def ontology_ancestors(item_id: str, actor: str = actor_dep):
        return {"item": item_id, "ancestors": kb.ontology_ancestors(item_id)}

    # ---------------------------------------------------------------- links

    @app.post("/links", status_code=201)
    async def propose_link(request: Request, actor: str = actor_dep):
        payload = await _json_body(request)
        link = kb.propose_link(
            actor,
            payload.get("source", ""),
            payload.get("target", ""),
            payload.get("link_type", ""),
        )
        return _link_record(link)

    @app.post("/links/{link_id}/decision")
    async def decide_link(link_id: str, request: Request, actor: str = actor_dep):
        payload = await _json_body(request)
        link = kb.decide_link(actor, link_id, payload.get("decision", ""))
        return _link_record(link)

    @app.get("/links")
    def list_links(
        actor: str = actor_dep,
        status: Optional[str] = Query(default=None),
        limit: int = Query(default=100, ge=1),
    ):
        try:
            return [_link_record(l) for l in kb.list_links(status, limit)]
        except ValueError:
            raise InvalidRequest(f"unknown link status {status!r}")

    @app.get("/elements/{element_id}/neighbors")
    def neighbors(
        element_id: str,
        actor: str = actor_dep,
        direction: str = Query(default="Out"),
        link_types: Optional[str] = Query(default=None),
        include_proposed: bool = Query(default=False),
    ):
        _require_read(actor, kb.peek_element(element_id).element_type)
        try:
            parsed_direction = Direction(direction)
        except ValueError:
            raise InvalidRequest(f"unknown direction {direction!r}")
        types = link_types.split(",") if link_types else None
        pairs = kb.neighbors(element_id, parsed_direction, types, include_proposed)
        return [{"link": _link_record(link), "element": other} for link, other in pairs]

    # ----------------------------------------------------- faits & workflow

    @app.get("/faits/{fait_id}/dossier")
    def dossier(fait_id: str, actor: str = actor_dep):
        _require_read(actor, kb.peek_element(fait_id).element_type)
        return _dossier_record(kb.assemble_dossier(fait_id))

    @app.get("/faits/{fait_id}/similar")
    def similar(fait_id: str, actor: str = actor_dep, k: int = Query(default=10, ge=1)):
        _require_read(actor, kb.peek_element(fait_id).element_type)
        return [_similar_record(h) for h in kb.similar_events(fait_id, k)]

    @app.get("/elements/{element_id}/suggestions")
    def suggestions(
        element_id: str,
        actor: str = actor_dep,
        k: int = Query(default=10, ge=1),
        weights: Optional[str] = Query(default=None),
    ):
        _require_read(actor, kb.peek_element(element_id).element_type)
        parsed = _parse_weights(weights)
        return [
            _suggestion_record(s) for s in kb.suggest_links(element_id, k, parsed)
        ]

    @app.post("/faits", status_code=201)
    async def declare_fait(request: Request, actor: str = actor_dep):
        payload = await _json_body(request)
        element, state = kb.declare_fait(
            actor,
            payload.get("title", ""),
            _sections(payload),
            payload.get("tags", []),
        )
        return {
            "element": store_io.element_to_record(element),
            "state": _state_record(state),
        }

    @app.post("/faits/{fait_id}/start")
    def start_analysis(fait_id: str, actor: str = actor_dep):
        return _state_record(kb.start_analysis(actor, fait_id))

    @app.post("/faits/{fait_id}/avis", status_code=201)
    async def issue_avis(fait_id: str, request: Request, actor: str = actor_dep):
        payload = await _json_body(request)
        avis, link, state = kb.issue_avis(
            actor, fait_id, payload.get("title", ""), _sections(payload)
        )
        return {
            "element": store_io.element_to_record(avis),
            "link": _link_record(link),
            "state": _state_record(state),
        }

    @app.post("/consolidations", status_code=201)
    async def consolidate(request: Request, actor: str = actor_dep):
        payload = await _json_body(request)
        new_pathologie = payload.get("pathologie")
        if new_pathologie is not None:
            new_pathologie = {
                "title": new_pathologie.get("title", ""),
                "sections": _sections(new_pathologie),
                "tags": new_pathologie.get("tags", []),
            }
        pathologie, links, states = kb.consolidate(
            actor,
            payload.get("avis_ids", []),
            payload.get("pathologie_id"),
            new_pathologie,
        )
        return {
            "element": store_io.element_to_record(pathologie),
            "links": [_link_record(l) for l in links],
            "states": [_state_record(s) for s in states],
        }

    @app.get("/faits/{fait_id}/state")
    def fait_state(fait_id: str, actor: str = actor_dep):
        _require_read(actor, kb.peek_element(fait_id).element_type)
        return _state_record(kb.get_fait_state(fait_id))

    # ------------------------------------------------------ metrics & admin

    @app.get("/metrics/transfer")
    def metrics(
        actor: str = actor_dep,
        window_from: Optional[str] = Query(default=None, alias="from"),
        window_to: Optional[str] = Query(default=None, alias="to"),
    ):
        return _metrics_record(kb.transfer_metrics(window_from, window_to))

    @app.get("/search")
    def search(
        actor: str = actor_dep,
        q: str = Query(default=""),
        k: int = Query(default=10, ge=1),
        element_type: Optional[str] = Query(default=None),
    ):
        kinds = [element_type] if element_type else None
        return [
            {"element": hit.doc_id, "score": hit.score}
            for hit in kb.search(q, k, kinds)
        ]

    @app.post("/admin/import")
    async def admin_import(request: Request, actor: str = actor_dep):
        body = (await request.body()).decode("utf-8")
        report = store_io.bulk_import(kb, actor, body.splitlines())
        return report.to_record()

    @app.get("/admin/export")
    def admin_export(actor: str = actor_dep):
        lines = store_io.export_lines(kb, actor)
        text = "\n".join(lines)
        return PlainTextResponse(text + "\n" if text else "")

    @app.get("/stats")
    def stats(actor: str = actor_dep):
        return kb.stats()

    return app


def serve(config) -> None:
    """Start the service from a ServiceConfig (CLI entry point)."""
    import uvicorn

    from . import config as config_mod

    meta = config_mod.load_meta_model(config.schema_file)
    stopwords = config_mod.load_stopwords(config.stopword_file)
    weights = SuggestionWeights(*config.weights)
    snapshot_path = None
    if config.data_dir:
        snapshot_path = f"{config.data_dir}/kb.json"
    kb: Optional[KnowledgeBase] = None
    if snapshot_path:
        try:
            kb = store_io.load_snapshot(
                snapshot_path, meta=meta, stopwords=stopwords, weights=weights
            )
        except KnowledgeBaseError as exc:
            if exc.code != "IO_FAILURE" or "cannot read" not in exc.message:
                raise
    if kb is None:
        kb = KnowledgeBase(meta=meta, stopwords=stopwords, weights=weights)
    tokens: dict[str, str] = {}
    if config.token_file:
        for token, spec in config_mod.load_tokens(config.token_file).items():
            kb.register_actor(spec.id, spec.name, spec.role)
            tokens[token] = spec.id
    app = create_app(kb, tokens)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")

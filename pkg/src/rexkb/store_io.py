"""Persistence: JSON Lines interchange, bulk import and durable snapshots.

Interchange format: UTF-8 JSON Lines, one record per line. Every record has
a ``kind`` (element | ontology_item | link | workflow_state) and a format
version ``v``. Field-by-field documentation lives in the README.

Import runs a single forward pass: referenced ontology items and elements
must appear before the records that use them. Each valid record commits on
its own (readers stay responsive during long imports); invalid records are
skipped and reported with their line number. Re-running an import is safe:
a record whose id already exists with identical content counts as accepted,
a differing one is rejected as a conflict.

Snapshots are whole-state JSON files written via atomic replace, so an
interrupted write can never leave a torn file behind.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from .engine import KnowledgeBase, MonotonicClock
from .errors import (
    IoFailure,
    KnowledgeBaseError,
    MalformedStream,
    VersionMismatch,
)
from .kb_core import (
    Actor,
    ContentStatus,
    ElementType,
    KnowledgeElement,
    OntologyItem,
    Role,
)
from .link_graph import Link, LinkStatus, LinkType
from .rex_flow import AuditEvent, FaitLifecycle, FaitState, HistoryEntry, SimilarHit
from .suggester import SuggestionWeights

FORMAT_VERSION = 1
SNAPSHOT_VERSION = 1
INDEX_VERSION = 1
SNAPSHOT_FORMAT = "rexkb-snapshot"

PathLike = Union[str, Path]


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


# ------------------------------------------------------------------ records


def ontology_item_to_record(item: OntologyItem) -> dict:
    return {
        "kind": "ontology_item",
        "v": FORMAT_VERSION,
        "id": item.id,
        "label": item.label,
        "parent": item.parent,
    }


def element_to_record(element: KnowledgeElement) -> dict:
    return {
        "kind": "element",
        "v": FORMAT_VERSION,
        "id": element.id,
        "element_type": element.element_type.value,
        "title": element.title,
        "sections": [[name, body] for name, body in element.sections],
        "tags": list(element.tags),
        "content_status": element.content_status.value,
        "author": element.author,
        "created_at": element.created_at,
        "updated_at": element.updated_at,
        "validated_by": element.validated_by,
        "validated_at": element.validated_at,
    }


def link_to_record(link: Link) -> dict:
    return {
        "kind": "link",
        "v": FORMAT_VERSION,
        "id": link.id,
        "source": link.source,
        "target": link.target,
        "link_type": link.link_type.value,
        "status": link.status.value,
        "proposer": link.proposer,
        "validator": link.validator,
        "decided_at": link.decided_at,
    }


def _history_entry_to_record(entry: HistoryEntry) -> dict:
    return {
        "state": entry.state.value,
        "actor": entry.actor,
        "timestamp": entry.timestamp,
        "metadata": dict(entry.metadata) if entry.metadata is not None else None,
    }


def _similar_hit_to_record(hit: SimilarHit) -> dict:
    return {"fait": hit.fait, "score": hit.score, "advisories": list(hit.advisories)}


def fait_state_to_record(state: FaitState) -> dict:
    return {
        "kind": "workflow_state",
        "v": FORMAT_VERSION,
        "fait": state.fait,
        "state": state.state.value,
        "analyst": state.analyst,
        "history": [_history_entry_to_record(e) for e in state.history],
        "similar_snapshot": (
            [_similar_hit_to_record(h) for h in state.similar_snapshot]
            if state.similar_snapshot is not None
            else None
        ),
    }


def _require(record: dict, key: str):
    if key not in record:
        raise MalformedStream(f"record is missing field {key!r}")
    return record[key]


def _opt_str(record: dict, key: str) -> Optional[str]:
    value = record.get(key)
    if value is not None and not isinstance(value, str):
        raise MalformedStream(f"field {key!r} must be a string or null")
    return value


def ontology_item_from_record(record: dict) -> OntologyItem:
    return OntologyItem(
        id=str(_require(record, "id")),
        label=str(_require(record, "label")),
        parent=_opt_str(record, "parent"),
    )


def element_from_record(record: dict) -> KnowledgeElement:
    from .engine import coerce_element_type

    sections_raw = record.get("sections", [])
    if not isinstance(sections_raw, list):
        raise MalformedStream("field 'sections' must be a list of [name, body] pairs")
    sections = []
    for entry in sections_raw:
        if isinstance(entry, dict):
            sections.append((entry.get("name"), entry.get("body", "")))
        else:
            if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                raise MalformedStream(f"malformed section entry: {entry!r}")
            sections.append((entry[0], entry[1]))
    tags = record.get("tags", [])
    if not isinstance(tags, list):
        raise MalformedStream("field 'tags' must be a list")
    try:
        status = ContentStatus(record.get("content_status", "Draft"))
    except ValueError:
        raise MalformedStream(
            f"unknown content_status {record.get('content_status')!r}"
        )
    return KnowledgeElement(
        id=str(_require(record, "id")),
        element_type=coerce_element_type(_require(record, "element_type")),
        title=str(_require(record, "title")),
        sections=tuple(sections),
        tags=tuple(str(t) for t in tags),
        content_status=status,
        author=str(record.get("author", "")),
        created_at=str(_require(record, "created_at")),
        updated_at=str(_require(record, "updated_at")),
        validated_by=_opt_str(record, "validated_by"),
        validated_at=_opt_str(record, "validated_at"),
    )


def link_from_record(record: dict) -> Link:
    try:
        link_type = LinkType(_require(record, "link_type"))
        status = LinkStatus(record.get("status", "Proposed"))
    except ValueError as exc:
        raise MalformedStream(str(exc))
    return Link(
        id=str(_require(record, "id")),
        source=str(_require(record, "source")),
        target=str(_require(record, "target")),
        link_type=link_type,
        status=status,
        proposer=str(record.get("proposer", "")),
        validator=_opt_str(record, "validator"),
        decided_at=_opt_str(record, "decided_at"),
    )


def fait_state_from_record(record: dict) -> FaitState:
    try:
        state = FaitLifecycle(_require(record, "state"))
    except ValueError as exc:
        raise MalformedStream(str(exc))
    history_raw = record.get("history", [])
    if not isinstance(history_raw, list):
        raise MalformedStream("field 'history' must be a list")
    history = []
    for entry in history_raw:
        if not isinstance(entry, dict):
            raise MalformedStream(f"malformed history entry: {entry!r}")
        try:
            history.append(
                HistoryEntry(
                    state=FaitLifecycle(entry["state"]),
                    actor=str(entry["actor"]),
                    timestamp=str(entry["timestamp"]),
                    metadata=entry.get("metadata"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise MalformedStream(f"malformed history entry: {exc!r}")
    snapshot_raw = record.get("similar_snapshot")
    snapshot = None
    if snapshot_raw is not None:
        if not isinstance(snapshot_raw, list):
            raise MalformedStream("field 'similar_snapshot' must be a list or null")
        try:
            snapshot = tuple(
                SimilarHit(
                    fait=str(h["fait"]),
                    score=float(h["score"]),
                    advisories=tuple(str(a) for a in h.get("advisories", [])),
                )
                for h in snapshot_raw
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedStream(f"malformed similar_snapshot: {exc!r}")
    return FaitState(
        fait=str(_require(record, "fait")),
        state=state,
        analyst=_opt_str(record, "analyst"),
        history=tuple(history),
        similar_snapshot=snapshot,
    )


# ------------------------------------------------------------- bulk import


@dataclass(frozen=True)
class RejectedLine:
    line: int
    code: str
    message: str


@dataclass
class ImportReport:
    accepted: dict[str, int] = field(default_factory=dict)
    rejected: list[RejectedLine] = field(default_factory=list)
    duration: float = 0.0

    @property
    def total_accepted(self) -> int:
        return sum(self.accepted.values())

    def to_record(self) -> dict:
        return {
            "accepted": dict(self.accepted),
            "rejected": [[r.line, r.code, r.message] for r in self.rejected],
            "duration": self.duration,
        }


_RESTORERS = {
    "ontology_item": (ontology_item_from_record, "restore_ontology_item"),
    "element": (element_from_record, "restore_element"),
    "link": (link_from_record, "restore_link"),
    "workflow_state": (fait_state_from_record, "restore_fait_state"),
}


def _import_line(kb: KnowledgeBase, raw: str) -> str:
    """Validate and commit one interchange line; returns its kind."""
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedStream(f"not valid JSON: {exc}")
    if not isinstance(record, dict):
        raise MalformedStream("record must be a JSON object")
    version = record.get("v", FORMAT_VERSION)
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise VersionMismatch(
            f"record format version {version!r} is newer than supported "
            f"{FORMAT_VERSION}"
        )
    kind = record.get("kind")
    if kind not in _RESTORERS:
        raise MalformedStream(f"unknown record kind {kind!r}")
    parse, restorer = _RESTORERS[kind]
    getattr(kb, restorer)(parse(record))
    return kind


def bulk_import(
    kb: KnowledgeBase, actor: str, lines: Iterable[str]
) -> ImportReport:
    """Single forward pass over interchange lines; per-line commit and
    per-line error isolation. Requires the Admin role."""
    kb.require_admin(actor)
    report = ImportReport(accepted={kind: 0 for kind in _RESTORERS})
    started = time.perf_counter()
    for line_number, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            kind = _import_line(kb, stripped)
            report.accepted[kind] += 1
        except KnowledgeBaseError as exc:
            report.rejected.append(RejectedLine(line_number, exc.code, exc.message))
    kb.index.warm_norms()
    report.duration = time.perf_counter() - started
    kb.log_admin_event(
        "bulk_import",
        actor,
        {"accepted": dict(report.accepted), "rejected": len(report.rejected)},
    )
    return report


def export_lines(kb: KnowledgeBase, actor: str) -> list[str]:
    """Deterministic dump: ontology items, elements, links, workflow states,
    each sorted by id. Re-importing into an empty base reproduces the KB."""
    kb.require_admin(actor)
    out: list[str] = []
    for item in kb.ontology_items_sorted():
        out.append(_dumps(ontology_item_to_record(item)))
    for element in kb.elements_sorted():
        out.append(_dumps(element_to_record(element)))
    for link in kb.links_sorted():
        out.append(_dumps(link_to_record(link)))
    for state in kb.fait_states_sorted():
        out.append(_dumps(fait_state_to_record(state)))
    return out


# ---------------------------------------------------------------- snapshot


def _audit_event_to_record(event: AuditEvent) -> dict:
    return {
        "seq": event.seq,
        "timestamp": event.timestamp,
        "actor": event.actor,
        "op": event.op,
        "ids": dict(event.ids),
        "extra": dict(event.extra),
    }


def _audit_event_from_record(record: dict) -> AuditEvent:
    return AuditEvent(
        seq=int(record["seq"]),
        timestamp=str(record["timestamp"]),
        actor=record.get("actor"),
        op=str(record["op"]),
        ids=record.get("ids", {}),
        extra=record.get("extra", {}),
    )


def write_snapshot(kb: KnowledgeBase, path: PathLike) -> None:
    """Durable whole-state dump, atomically replacing any previous file."""
    state = {
        "format": SNAPSHOT_FORMAT,
        "v": SNAPSHOT_VERSION,
        "index_v": INDEX_VERSION,
        "clock": kb.clock.last(),
        "counters": kb.id_counters(),
        "actors": [
            {"id": a.id, "name": a.name, "role": a.role.value}
            for a in kb.list_actors()
        ],
        "ontology": [ontology_item_to_record(i) for i in kb.ontology_items_sorted()],
        "elements": [element_to_record(e) for e in kb.elements_sorted()],
        "links": [link_to_record(l) for l in kb.links_sorted()],
        "workflow": [fait_state_to_record(s) for s in kb.fait_states_sorted()],
        "audit": [_audit_event_to_record(e) for e in kb.audit_events()],
        # Term counts as ordered pairs: restoring must reproduce the original
        # insertion order so recomputed norms are bit-identical.
        "index": {
            "docs": [
                [
                    doc_id,
                    kb.index.kind_of(doc_id),
                    [[t, c] for t, c in kb.index.term_counts(doc_id).items()],
                ]
                for doc_id in sorted(kb.index.doc_ids())
            ]
        },
    }
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(state, handle, ensure_ascii=False, sort_keys=True)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, target)
    except OSError as exc:
        raise IoFailure(f"cannot write snapshot: {exc}")


def load_snapshot(
    path: PathLike,
    *,
    meta=None,
    stopwords=None,
    weights: Optional[SuggestionWeights] = None,
    clock: Optional[MonotonicClock] = None,
) -> KnowledgeBase:
    """Rebuild a knowledge base from a snapshot file.

    The similarity index is restored verbatim when the snapshot's index
    version matches; otherwise it is rebuilt from element text (the index is
    derived data and rebuild is the trusted path). Failures leave the caller's
    current state untouched: a fresh instance is returned only on success.
    """
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read snapshot: {exc}")
    try:
        state = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise IoFailure(f"snapshot is not valid JSON: {exc}")
    if not isinstance(state, dict) or state.get("format") != SNAPSHOT_FORMAT:
        raise IoFailure("file is not a knowledge-base snapshot")
    version = state.get("v")
    if version != SNAPSHOT_VERSION:
        raise VersionMismatch(
            f"snapshot version {version!r} is not supported (expected "
            f"{SNAPSHOT_VERSION})"
        )
    kb = KnowledgeBase(meta=meta, stopwords=stopwords, weights=weights, clock=clock)
    try:
        for spec in state.get("actors", []):
            kb.register_actor(spec["id"], spec.get("name", spec["id"]), Role(spec["role"]))
        for record in state.get("ontology", []):
            kb.restore_ontology_item(ontology_item_from_record(record))
        reuse_index = state.get("index_v") == INDEX_VERSION and "index" in state
        if reuse_index:
            kb.suspend_indexing()
        try:
            for record in state.get("elements", []):
                kb.restore_element(element_from_record(record))
        finally:
            if reuse_index:
                kb.resume_indexing()
        if reuse_index:
            for doc_id, kind, counts in state["index"]["docs"]:
                kb.index.restore_doc(
                    str(doc_id), {str(t): int(c) for t, c in counts}, kind
                )
        for record in state.get("links", []):
            kb.restore_link(link_from_record(record))
        for record in state.get("workflow", []):
            kb.restore_fait_state(fait_state_from_record(record))
        kb.restore_audit(
            [_audit_event_from_record(r) for r in state.get("audit", [])]
        )
        kb.set_id_counters(state.get("counters", {}))
        if state.get("clock"):
            kb.clock.observe(state["clock"])
    except KnowledgeBaseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise IoFailure(f"snapshot structure is invalid: {exc!r}")
    kb.index.warm_norms()
    return kb

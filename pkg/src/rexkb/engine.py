"""Knowledge-base engine: one facade object owning all state.

Concurrency model: any number of concurrent readers, all mutations
serialized through a single writer lock (the commit point). Composite
operations collect undo callbacks in a journal and roll back on failure, so
readers only ever observe committed state and failed operations leave no
residue.

Every mutation appends one audit event; dossier and element reads append
read events feeding the transfer metrics. The audit log is append-only.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import replace
from datetime import datetime, timedelta, timezone
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from . import config as config_mod
from .errors import (
    AlreadyDecided,
    AlreadyValidated,
    Conflict,
    DuplicateLink,
    EmptyTitle,
    InvalidRequest,
    NotFound,
    PermissionDenied,
    SchemaViolation,
    UnknownActor,
    UnknownReference,
    UnknownTag,
    WrongType,
)
from .kb_core import (
    AccessAction,
    Actor,
    ContentStatus,
    ElementType,
    KnowledgeElement,
    LinkType,
    MetaModel,
    Ontology,
    OntologyItem,
    Role,
    normalize_sections,
)
from .link_graph import (
    Direction,
    FaitDossier,
    Link,
    LinkGraph,
    LinkStatus,
    assemble_dossier,
)
from .rex_flow import (
    AuditEvent,
    FaitLifecycle,
    FaitState,
    HistoryEntry,
    SimilarHit,
    TransferMetrics,
    check_transition,
    compute_transfer_metrics,
)
from .sim_index import SearchHit, SimilarityIndex, Tokenizer
from .suggester import Suggestion, SuggestionWeights, suggest_links


def format_timestamp(dt: datetime) -> str:
    """Fixed-width UTC ISO form so lexicographic order is chronological."""
    return dt.astimezone(timezone.utc).isoformat(timespec="microseconds")


def parse_timestamp(value: str) -> datetime:
    raw = value.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise InvalidRequest(f"invalid timestamp {value!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


class MonotonicClock:
    """Engine-assigned timestamps, strictly increasing per knowledge base."""

    def __init__(self, base: Optional[Callable[[], datetime]] = None):
        self._base = base or (lambda: datetime.now(timezone.utc))
        self._last: Optional[datetime] = None
        self._lock = threading.Lock()

    def now(self) -> str:
        with self._lock:
            current = self._base()
            if current.tzinfo is None:
                current = current.replace(tzinfo=timezone.utc)
            if self._last is not None and current <= self._last:
                current = self._last + timedelta(microseconds=1)
            self._last = current
            return format_timestamp(current)

    def observe(self, timestamp: str) -> None:
        """Advance past an externally supplied (imported) timestamp."""
        dt = parse_timestamp(timestamp)
        with self._lock:
            if self._last is None or dt > self._last:
                self._last = dt

    def last(self) -> Optional[str]:
        with self._lock:
            return format_timestamp(self._last) if self._last is not None else None


class _RWLock:
    """Write-preferring readers/writer lock, reentrant for the writing thread."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writer: Optional[int] = None
        self._writer_depth = 0
        self._writers_waiting = 0

    @contextmanager
    def read(self):
        me = threading.get_ident()
        with self._cond:
            reentrant = self._writer == me
            if not reentrant:
                while self._writer is not None or self._writers_waiting:
                    self._cond.wait()
                self._readers += 1
        try:
            yield
        finally:
            if not reentrant:
                with self._cond:
                    self._readers -= 1
                    if self._readers == 0:
                        self._cond.notify_all()

    @contextmanager
    def write(self):
        me = threading.get_ident()
        with self._cond:
            reentrant = self._writer == me
            if reentrant:
                self._writer_depth += 1
            else:
                self._writers_waiting += 1
                while self._writer is not None or self._readers > 0:
                    self._cond.wait()
                self._writers_waiting -= 1
                self._writer = me
                self._writer_depth = 1
        try:
            yield
        finally:
            with self._cond:
                self._writer_depth -= 1
                if self._writer_depth == 0:
                    self._writer = None
                self._cond.notify_all()


_ID_WIDTH = 6


class KnowledgeBase:
    """All stores plus the operations exposed to the API, CLI and tests."""

    def __init__(
        self,
        meta: Optional[MetaModel] = None,
        stopwords: Optional[Iterable[str]] = None,
        weights: Optional[SuggestionWeights] = None,
        clock: Optional[MonotonicClock] = None,
    ):
        self.meta = meta if meta is not None else config_mod.load_meta_model()
        words = stopwords if stopwords is not None else config_mod.load_stopwords()
        self.default_weights = weights or SuggestionWeights()
        self.default_weights.normalized()  # validate eagerly, normalize at use
        self.clock = clock or MonotonicClock()

        self._lock = _RWLock()
        self._actors: dict[str, Actor] = {}
        self._elements: dict[str, KnowledgeElement] = {}
        self._elements_by_type: dict[ElementType, set[str]] = {
            et: set() for et in ElementType
        }
        self.ontology = Ontology()
        self.index = SimilarityIndex(Tokenizer(words))
        self.graph = LinkGraph(self.meta.schema, self._type_of)
        self._fait_states: dict[str, FaitState] = {}
        self._audit: list[AuditEvent] = []
        self._counters: dict[str, int] = {"el": 0, "on": 0, "ln": 0}
        self._indexing_enabled = True

    # ----------------------------------------------------------- primitives

    def _type_of(self, element_id: str) -> ElementType:
        element = self._elements.get(element_id)
        if element is None:
            raise NotFound(f"unknown element {element_id!r}")
        return element.element_type

    def _new_id(self, prefix: str, store: Mapping[str, Any]) -> str:
        while True:
            self._counters[prefix] += 1
            candidate = f"{prefix}-{self._counters[prefix]:0{_ID_WIDTH}d}"
            if candidate not in store:
                return candidate

    @contextmanager
    def _txn(self):
        """Undo journal: on any failure, applied steps are rolled back."""
        undo: list[Callable[[], None]] = []
        try:
            yield undo
        except BaseException:
            for step in reversed(undo):
                step()
            raise

    def _log(
        self,
        op: str,
        actor: Optional[str],
        ids: Optional[Mapping[str, Any]] = None,
        extra: Optional[Mapping[str, Any]] = None,
    ) -> None:
        self._audit.append(
            AuditEvent(
                seq=len(self._audit) + 1,
                timestamp=self.clock.now(),
                actor=actor,
                op=op,
                ids=dict(ids or {}),
                extra=dict(extra or {}),
            )
        )

    # --------------------------------------------------------------- actors

    def register_actor(self, actor_id: str, name: str, role: Role | str) -> Actor:
        """Plumbing for token/config loading and tests; not permission-gated."""
        actor = Actor(id=actor_id, name=name, role=Role(role))
        with self._lock.write():
            existing = self._actors.get(actor_id)
            if existing is not None:
                if existing != actor:
                    raise Conflict(f"actor {actor_id!r} already registered differently")
                return existing
            self._actors[actor_id] = actor
            return actor

    def get_actor(self, actor_id: str) -> Actor:
        actor = self._actors.get(actor_id)
        if actor is None:
            raise UnknownActor(f"unknown actor {actor_id!r}")
        return actor

    def list_actors(self) -> list[Actor]:
        with self._lock.read():
            return sorted(self._actors.values(), key=lambda a: a.id)

    def _require_access(
        self, actor_id: str, action: AccessAction, element_type: ElementType
    ) -> Actor:
        actor = self.get_actor(actor_id)
        if not self.meta.policy.allows(actor.role, action, element_type):
            raise PermissionDenied(
                f"actor {actor_id!r} ({actor.role.value}) may not "
                f"{action.value} {element_type.value}"
            )
        return actor

    def _require_role(self, actor_id: str, roles: Iterable[Role]) -> Actor:
        actor = self.get_actor(actor_id)
        allowed = set(roles)
        if actor.role not in allowed:
            names = ", ".join(sorted(r.value for r in allowed))
            raise PermissionDenied(
                f"actor {actor_id!r} ({actor.role.value}) must be one of: {names}"
            )
        return actor

    def check_access(
        self, actor_id: str, action: AccessAction | str, element_type: ElementType | str
    ) -> bool:
        """Pure role-matrix decision; raises only for unknown actors."""
        actor = self.get_actor(actor_id)
        return self.meta.policy.allows(
            actor.role, AccessAction(action), coerce_element_type(element_type)
        )

    # ------------------------------------------------------------- elements

    def _build_element(
        self,
        element_id: str,
        actor_id: str,
        element_type: ElementType,
        title: str,
        sections: Iterable[tuple[str, str]],
        tags: Iterable[str],
        timestamp: str,
    ) -> KnowledgeElement:
        if not isinstance(title, str) or not title.strip():
            raise EmptyTitle("element title must be non-empty")
        normalized = normalize_sections(self.meta.template_for(element_type), sections)
        tag_tuple = tuple(sorted(set(tags)))
        for tag in tag_tuple:
            if tag not in self.ontology:
                raise UnknownTag(f"unknown ontology item {tag!r}")
        return KnowledgeElement(
            id=element_id,
            element_type=element_type,
            title=title,
            sections=normalized,
            tags=tag_tuple,
            content_status=ContentStatus.DRAFT,
            author=actor_id,
            created_at=timestamp,
            updated_at=timestamp,
        )

    def _commit_element(self, undo: list, element: KnowledgeElement) -> None:
        eid = element.id
        self._elements[eid] = element
        undo.append(lambda: self._elements.pop(eid, None))
        self._elements_by_type[element.element_type].add(eid)
        undo.append(lambda: self._elements_by_type[element.element_type].discard(eid))
        if self._indexing_enabled:
            self.index.upsert(eid, element.indexed_text(), element.element_type.value)
            undo.append(lambda: self.index.discard(eid))

    def suspend_indexing(self) -> None:
        """Snapshot load only: element commits skip the index because a
        serialized index will be installed wholesale afterwards."""
        self._indexing_enabled = False

    def resume_indexing(self) -> None:
        self._indexing_enabled = True

    def create_element(
        self,
        actor: str,
        element_type: ElementType | str,
        title: str,
        sections: Iterable[tuple[str, str]] = (),
        tags: Iterable[str] = (),
    ) -> KnowledgeElement:
        etype = coerce_element_type(element_type)
        with self._lock.write():
            self._require_access(actor, AccessAction.WRITE, etype)
            with self._txn() as undo:
                element = self._build_element(
                    self._new_id("el", self._elements),
                    actor,
                    etype,
                    title,
                    sections,
                    tags,
                    self.clock.now(),
                )
                self._commit_element(undo, element)
            self._log("create_element", actor, {"element": element.id})
            return element

    def get_element(self, element_id: str) -> KnowledgeElement:
        """Read one element; counted as a transmission event."""
        with self._lock.read():
            element = self._elements.get(element_id)
            if element is None:
                raise NotFound(f"unknown element {element_id!r}")
            self._log("read_element", None, {"element": element_id})
            return element

    def find_element(self, element_id: str) -> Optional[KnowledgeElement]:
        return self._elements.get(element_id)

    def peek_element(self, element_id: str) -> KnowledgeElement:
        """Like get_element but not counted as a transmission read
        (permission checks, internal lookups)."""
        with self._lock.read():
            element = self._elements.get(element_id)
            if element is None:
                raise NotFound(f"unknown element {element_id!r}")
            return element

    def has_element(self, element_id: str) -> bool:
        return element_id in self._elements

    def list_elements(
        self,
        element_type: Optional[ElementType | str] = None,
        limit: Optional[int] = None,
    ) -> list[KnowledgeElement]:
        """Most recently created first (stable tie-break on id)."""
        with self._lock.read():
            if element_type is not None:
                ids: Iterable[str] = self._elements_by_type[
                    coerce_element_type(element_type)
                ]
                found = [self._elements[i] for i in ids]
            else:
                found = list(self._elements.values())
        found.sort(key=lambda e: (e.created_at, e.id), reverse=True)
        return found[:limit] if limit is not None else found

    def elements_sorted(self) -> list[KnowledgeElement]:
        with self._lock.read():
            return sorted(self._elements.values(), key=lambda e: e.id)

    def validate_element(self, actor: str, element_id: str) -> KnowledgeElement:
        with self._lock.write():
            element = self._elements.get(element_id)
            if element is None:
                raise NotFound(f"unknown element {element_id!r}")
            self._require_access(actor, AccessAction.VALIDATE, element.element_type)
            if element.content_status is ContentStatus.VALIDATED:
                raise AlreadyValidated(f"element {element_id!r} already validated")
            timestamp = self.clock.now()
            updated = replace(
                element,
                content_status=ContentStatus.VALIDATED,
                validated_by=actor,
                validated_at=timestamp,
                updated_at=timestamp,
            )
            self._elements[element_id] = updated
            self._log("validate_element", actor, {"element": element_id})
            return updated

    # ------------------------------------------------------------- ontology

    def add_ontology_item(
        self, actor: str, label: str, parent: Optional[str] = None
    ) -> OntologyItem:
        with self._lock.write():
            self._require_role(actor, (Role.EXPERT, Role.ADMIN))
            self.ontology.validate_new(label, parent)
            item = OntologyItem(
                id=self._new_id("on", {i.id: i for i in self.ontology.items()}),
                label=label,
                parent=parent,
            )
            self.ontology.add(item)
            self._log("add_ontology_item", actor, {"item": item.id})
            return item

    def ontology_ancestors(self, item_id: str) -> list[str]:
        with self._lock.read():
            return self.ontology.ancestors(item_id)

    def get_ontology_item(self, item_id: str) -> OntologyItem:
        with self._lock.read():
            return self.ontology.get(item_id)

    def ontology_items_sorted(self) -> list[OntologyItem]:
        with self._lock.read():
            return sorted(self.ontology.items(), key=lambda i: i.id)

    # ---------------------------------------------------------------- links

    def link_type_allowed(
        self,
        source_type: ElementType | str,
        link_type: LinkType | str,
        target_type: ElementType | str,
    ) -> bool:
        return self.meta.schema.allows(
            coerce_element_type(source_type),
            coerce_link_type(link_type),
            coerce_element_type(target_type),
        )

    def _absorption_hit(self, source: str, target: str) -> bool:
        """True when a fact under analysis links to a snapshot-surfaced element."""
        state = self._fait_states.get(source)
        return (
            state is not None
            and state.state is FaitLifecycle.UNDER_ANALYSIS
            and target in state.surfaced_ids()
        )

    def propose_link(
        self, actor: str, source: str, target: str, link_type: LinkType | str
    ) -> Link:
        lt = coerce_link_type(link_type)
        with self._lock.write():
            source_type = self._type_of(source)
            self._type_of(target)  # NotFound if missing
            self._require_access(actor, AccessAction.WRITE, source_type)
            self.graph.validate_new(source, target, lt)
            link = Link(
                id=self._new_id("ln", {l.id: l for l in self.graph.all_links()}),
                source=source,
                target=target,
                link_type=lt,
                status=LinkStatus.PROPOSED,
                proposer=actor,
            )
            absorption = self._absorption_hit(source, target)
            with self._txn() as undo:
                self.graph.add(link)
                undo.append(lambda: self.graph.remove(link.id))
            self._log(
                "propose_link",
                actor,
                {"link": link.id, "source": source, "target": target},
                {"link_type": lt.value, "absorption": absorption},
            )
            return link

    def decide_link(self, actor: str, link_id: str, decision: str) -> Link:
        if decision not in ("Validate", "Reject"):
            raise InvalidRequest(f"decision must be Validate or Reject, got {decision!r}")
        with self._lock.write():
            link = self.graph.get(link_id)
            self._require_access(
                actor, AccessAction.VALIDATE, self._type_of(link.source)
            )
            if link.status is not LinkStatus.PROPOSED:
                raise AlreadyDecided(
                    f"link {link_id!r} already {link.status.value.lower()}"
                )
            status = (
                LinkStatus.VALIDATED if decision == "Validate" else LinkStatus.REJECTED
            )
            updated = Link(
                id=link.id,
                source=link.source,
                target=link.target,
                link_type=link.link_type,
                status=status,
                proposer=link.proposer,
                validator=actor,
                decided_at=self.clock.now(),
            )
            self.graph.replace(updated)
            self._log(
                "decide_link",
                actor,
                {"link": link_id},
                {
                    "decision": decision,
                    "validated_links": 1 if status is LinkStatus.VALIDATED else 0,
                },
            )
            return updated

    def get_link(self, link_id: str) -> Link:
        with self._lock.read():
            return self.graph.get(link_id)

    def list_links(
        self, status: Optional[LinkStatus | str] = None, limit: Optional[int] = None
    ) -> list[Link]:
        with self._lock.read():
            links = self.graph.all_links()
        if status is not None:
            wanted = LinkStatus(status)
            links = [l for l in links if l.status is wanted]
        links.sort(key=lambda l: l.id)
        return links[:limit] if limit is not None else links

    def neighbors(
        self,
        element_id: str,
        direction: Direction | str = Direction.OUT,
        link_types: Optional[Iterable[LinkType | str]] = None,
        include_proposed: bool = False,
    ) -> list[tuple[Link, str]]:
        with self._lock.read():
            if element_id not in self._elements:
                raise NotFound(f"unknown element {element_id!r}")
            types = (
                None
                if link_types is None
                else [coerce_link_type(t) for t in link_types]
            )
            return self.graph.neighbors(
                element_id, Direction(direction), types, include_proposed
            )

    def assemble_dossier(self, fait_id: str) -> FaitDossier:
        with self._lock.read():
            self._require_fait(fait_id)
            dossier = assemble_dossier(self.graph, fait_id)
            self._log("read_dossier", None, {"fait": fait_id})
            return dossier

    def _require_fait(self, fait_id: str) -> KnowledgeElement:
        element = self._elements.get(fait_id)
        if element is None:
            raise NotFound(f"unknown element {fait_id!r}")
        if element.element_type is not ElementType.FAIT_TECHNIQUE:
            raise WrongType(
                f"element {fait_id!r} is {element.element_type.value}, "
                f"expected {ElementType.FAIT_TECHNIQUE.value}"
            )
        return element

    # ----------------------------------------------------- search & suggest

    def search(
        self,
        query_text: str,
        k: int = 10,
        element_types: Optional[Iterable[ElementType | str]] = None,
    ) -> list[SearchHit]:
        with self._lock.read():
            kinds = (
                None
                if element_types is None
                else [coerce_element_type(t).value for t in element_types]
            )
            return self.index.query(query_text, k, kinds)

    def _similar_events(self, fait_id: str, k: int) -> list[SimilarHit]:
        if k < 1:
            raise InvalidRequest(f"k must be >= 1, got {k}")
        self._require_fait(fait_id)
        hits = self.index.similar_to(
            fait_id, kinds=(ElementType.FAIT_TECHNIQUE.value,), k=k
        )
        return [
            SimilarHit(
                fait=hit.doc_id,
                score=hit.score,
                advisories=tuple(
                    sorted(
                        self.graph.validated_targets(hit.doc_id, LinkType.SUBJECT_OF)
                    )
                ),
            )
            for hit in hits
        ]

    def similar_events(self, fait_id: str, k: int = 10) -> list[SimilarHit]:
        """Nearest past facts with their validated advisories attached."""
        with self._lock.read():
            return self._similar_events(fait_id, k)

    def suggest_links(
        self,
        element_id: str,
        k: int = 10,
        weights: Optional[SuggestionWeights | Sequence[float]] = None,
    ) -> list[Suggestion]:
        with self._lock.read():
            element = self._elements.get(element_id)
            if element is None:
                raise NotFound(f"unknown element {element_id!r}")
            if weights is None:
                w = self.default_weights
            elif isinstance(weights, SuggestionWeights):
                w = weights
            else:
                w = SuggestionWeights(*weights)
            return suggest_links(
                element_id,
                element.element_type,
                element.tags,
                meta=self.meta,
                ontology=self.ontology,
                graph=self.graph,
                index=self.index,
                elements_of_type=lambda et: self._elements_by_type[et],
                tags_of=lambda eid: self._elements[eid].tags,
                k=k,
                weights=w,
            )

    # ------------------------------------------------------------- workflow

    def declare_fait(
        self,
        actor: str,
        title: str,
        sections: Iterable[tuple[str, str]] = (),
        tags: Iterable[str] = (),
    ) -> tuple[KnowledgeElement, FaitState]:
        with self._lock.write():
            self._require_access(actor, AccessAction.WRITE, ElementType.FAIT_TECHNIQUE)
            with self._txn() as undo:
                timestamp = self.clock.now()
                element = self._build_element(
                    self._new_id("el", self._elements),
                    actor,
                    ElementType.FAIT_TECHNIQUE,
                    title,
                    sections,
                    tags,
                    timestamp,
                )
                self._commit_element(undo, element)
                state = FaitState(
                    fait=element.id,
                    state=FaitLifecycle.DECLARED,
                    history=(
                        HistoryEntry(FaitLifecycle.DECLARED, actor, timestamp),
                    ),
                )
                self._fait_states[element.id] = state
                undo.append(lambda: self._fait_states.pop(element.id, None))
            self._log("declare_fait", actor, {"element": element.id})
            return element, state

    def get_fait_state(self, fait_id: str) -> FaitState:
        with self._lock.read():
            state = self._fait_states.get(fait_id)
            if state is None:
                raise NotFound(f"no workflow state for fact {fait_id!r}")
            return state

    def find_fait_state(self, fait_id: str) -> Optional[FaitState]:
        return self._fait_states.get(fait_id)

    def fait_states_sorted(self) -> list[FaitState]:
        with self._lock.read():
            return sorted(self._fait_states.values(), key=lambda s: s.fait)

    def _require_fait_state(self, fait_id: str) -> FaitState:
        self._require_fait(fait_id)
        state = self._fait_states.get(fait_id)
        if state is None:
            raise NotFound(f"no workflow state for fact {fait_id!r}")
        return state

    def start_analysis(self, actor: str, fait_id: str) -> FaitState:
        """Move a declared fact under analysis, snapshotting its nearest
        past events (top 10) into the history for audit."""
        with self._lock.write():
            self._require_access(actor, AccessAction.WRITE, ElementType.FAIT_TECHNIQUE)
            state = self._require_fait_state(fait_id)
            check_transition(state.state, FaitLifecycle.UNDER_ANALYSIS)
            snapshot = tuple(self._similar_events(fait_id, k=10))
            timestamp = self.clock.now()
            entry = HistoryEntry(
                FaitLifecycle.UNDER_ANALYSIS,
                actor,
                timestamp,
                metadata={
                    "similar": [
                        {
                            "fait": hit.fait,
                            "score": hit.score,
                            "advisories": list(hit.advisories),
                        }
                        for hit in snapshot
                    ]
                },
            )
            updated = FaitState(
                fait=fait_id,
                state=FaitLifecycle.UNDER_ANALYSIS,
                analyst=actor,
                history=state.history + (entry,),
                similar_snapshot=snapshot,
            )
            self._fait_states[fait_id] = updated
            self._log(
                "start_analysis",
                actor,
                {"fait": fait_id},
                {"snapshot_size": len(snapshot)},
            )
            return updated

    def issue_avis(
        self,
        actor: str,
        fait_id: str,
        avis_title: str,
        avis_sections: Iterable[tuple[str, str]] = (),
    ) -> tuple[KnowledgeElement, Link, FaitState]:
        """Short-loop output: advisory element plus a validated subject_of
        link from the fact, which moves to AvisIssued. Atomic."""
        with self._lock.write():
            self._require_access(actor, AccessAction.WRITE, ElementType.AVIS_CONCEPTEUR)
            self._require_access(
                actor, AccessAction.VALIDATE, ElementType.FAIT_TECHNIQUE
            )
            state = self._require_fait_state(fait_id)
            check_transition(state.state, FaitLifecycle.AVIS_ISSUED)
            with self._txn() as undo:
                timestamp = self.clock.now()
                avis = self._build_element(
                    self._new_id("el", self._elements),
                    actor,
                    ElementType.AVIS_CONCEPTEUR,
                    avis_title,
                    avis_sections,
                    (),
                    timestamp,
                )
                self._commit_element(undo, avis)
                self.graph.validate_new(fait_id, avis.id, LinkType.SUBJECT_OF)
                link = Link(
                    id=self._new_id("ln", {l.id: l for l in self.graph.all_links()}),
                    source=fait_id,
                    target=avis.id,
                    link_type=LinkType.SUBJECT_OF,
                    status=LinkStatus.VALIDATED,
                    proposer=actor,
                    validator=actor,
                    decided_at=timestamp,
                )
                self.graph.add(link)
                undo.append(lambda: self.graph.remove(link.id))
                entry = HistoryEntry(FaitLifecycle.AVIS_ISSUED, actor, timestamp)
                updated = FaitState(
                    fait=fait_id,
                    state=FaitLifecycle.AVIS_ISSUED,
                    analyst=state.analyst,
                    history=state.history + (entry,),
                    similar_snapshot=state.similar_snapshot,
                )
                previous = state
                self._fait_states[fait_id] = updated
                undo.append(
                    lambda: self._fait_states.__setitem__(fait_id, previous)
                )
            self._log(
                "issue_avis",
                actor,
                {"fait": fait_id, "avis": avis.id, "link": link.id},
                {"validated_links": 1},
            )
            return avis, link, updated

    def consolidate(
        self,
        actor: str,
        avis_ids: Sequence[str],
        pathologie_id: Optional[str] = None,
        new_pathologie: Optional[Mapping[str, Any]] = None,
    ) -> tuple[KnowledgeElement, list[Link], list[FaitState]]:
        """Long-loop output: validated consolidated_in links from each
        advisory into one pathology; the advisories' facts move from
        AvisIssued to Consolidated. Atomic."""
        if not avis_ids:
            raise InvalidRequest("consolidate requires at least one advisory id")
        if (pathologie_id is None) == (new_pathologie is None):
            raise InvalidRequest(
                "exactly one of pathologie_id / new_pathologie must be given"
            )
        with self._lock.write():
            self._require_access(
                actor, AccessAction.VALIDATE, ElementType.AVIS_CONCEPTEUR
            )
            for avis_id in avis_ids:
                element = self._elements.get(avis_id)
                if element is None:
                    raise NotFound(f"unknown element {avis_id!r}")
                if element.element_type is not ElementType.AVIS_CONCEPTEUR:
                    raise WrongType(
                        f"element {avis_id!r} is {element.element_type.value}, "
                        f"expected {ElementType.AVIS_CONCEPTEUR.value}"
                    )
            if pathologie_id is not None:
                pathologie = self._elements.get(pathologie_id)
                if pathologie is None:
                    raise NotFound(f"unknown element {pathologie_id!r}")
                if pathologie.element_type is not ElementType.REX_PATHOLOGIE:
                    raise WrongType(
                        f"element {pathologie_id!r} is "
                        f"{pathologie.element_type.value}, expected "
                        f"{ElementType.REX_PATHOLOGIE.value}"
                    )
            else:
                self._require_access(
                    actor, AccessAction.WRITE, ElementType.REX_PATHOLOGIE
                )

            # Facts behind each advisory: validated subject_of links into it.
            fait_ids: list[str] = []
            for avis_id in avis_ids:
                for link, other in self.graph.neighbors(
                    avis_id, Direction.IN, (LinkType.SUBJECT_OF,)
                ):
                    if other not in fait_ids:
                        fait_ids.append(other)
            for fait_id in fait_ids:
                state = self._fait_states.get(fait_id)
                if state is not None:
                    check_transition(state.state, FaitLifecycle.CONSOLIDATED)

            with self._txn() as undo:
                timestamp = self.clock.now()
                if pathologie_id is None:
                    fields = dict(new_pathologie or {})
                    pathologie = self._build_element(
                        self._new_id("el", self._elements),
                        actor,
                        ElementType.REX_PATHOLOGIE,
                        fields.get("title", ""),
                        fields.get("sections", ()),
                        fields.get("tags", ()),
                        timestamp,
                    )
                    self._commit_element(undo, pathologie)
                for avis_id in avis_ids:
                    self.graph.validate_new(
                        avis_id, pathologie.id, LinkType.CONSOLIDATED_IN
                    )
                links: list[Link] = []
                for avis_id in avis_ids:
                    link = Link(
                        id=self._new_id(
                            "ln", {l.id: l for l in self.graph.all_links()}
                        ),
                        source=avis_id,
                        target=pathologie.id,
                        link_type=LinkType.CONSOLIDATED_IN,
                        status=LinkStatus.VALIDATED,
                        proposer=actor,
                        validator=actor,
                        decided_at=timestamp,
                    )
                    self.graph.add(link)
                    undo.append(lambda link_id=link.id: self.graph.remove(link_id))
                    links.append(link)
                states: list[FaitState] = []
                for fait_id in fait_ids:
                    state = self._fait_states.get(fait_id)
                    if state is None:
                        continue
                    entry = HistoryEntry(
                        FaitLifecycle.CONSOLIDATED, actor, timestamp
                    )
                    updated = FaitState(
                        fait=fait_id,
                        state=FaitLifecycle.CONSOLIDATED,
                        analyst=state.analyst,
                        history=state.history + (entry,),
                        similar_snapshot=state.similar_snapshot,
                    )
                    previous = state
                    self._fait_states[fait_id] = updated
                    undo.append(
                        lambda fid=fait_id, prev=previous: self._fait_states.__setitem__(
                            fid, prev
                        )
                    )
                    states.append(updated)
            self._log(
                "consolidate",
                actor,
                {
                    "pathologie": pathologie.id,
                    "avis": list(avis_ids),
                    "links": [l.id for l in links],
                    "faits": fait_ids,
                },
                {
                    "validated_links": len(links),
                    "created_pathologie": pathologie_id is None,
                },
            )
            return pathologie, links, states

    # -------------------------------------------------------------- metrics

    def transfer_metrics(
        self, window_from: Optional[str] = None, window_to: Optional[str] = None
    ) -> TransferMetrics:
        lo = (
            format_timestamp(parse_timestamp(window_from))
            if window_from is not None
            else None
        )
        hi = (
            format_timestamp(parse_timestamp(window_to))
            if window_to is not None
            else None
        )
        with self._lock.read():
            events = list(self._audit)
        return compute_transfer_metrics(events, lo, hi)

    def audit_events(self) -> list[AuditEvent]:
        with self._lock.read():
            return list(self._audit)

    # ------------------------------------------------------- restore paths
    # Used by bulk import and snapshot load: caller-supplied stable ids,
    # Admin-gated by the caller. Validation is as strict as the interactive
    # paths; identical re-imports are accepted as no-ops.

    def restore_ontology_item(self, item: OntologyItem) -> bool:
        with self._lock.write():
            if item.id in self.ontology:
                if self.ontology.get(item.id) == item:
                    return False
                raise Conflict(
                    f"ontology item {item.id!r} exists with different content"
                )
            self.ontology.add(item)
            return True

    def restore_element(self, element: KnowledgeElement) -> bool:
        with self._lock.write():
            normalized = self._normalize_restored_element(element)
            existing = self._elements.get(normalized.id)
            if existing is not None:
                if existing == normalized:
                    return False
                raise Conflict(
                    f"element {normalized.id!r} exists with different content"
                )
            with self._txn() as undo:
                self._commit_element(undo, normalized)
            for ts in (normalized.created_at, normalized.updated_at,
                       normalized.validated_at):
                if ts:
                    self.clock.observe(ts)
            return True

    def _normalize_restored_element(self, element: KnowledgeElement) -> KnowledgeElement:
        if not element.id or not isinstance(element.id, str):
            raise InvalidRequest("element id must be a non-empty string")
        if not element.title or not element.title.strip():
            raise EmptyTitle("element title must be non-empty")
        for tag in element.tags:
            if tag not in self.ontology:
                raise UnknownTag(f"unknown ontology item {tag!r}")
        created = format_timestamp(parse_timestamp(element.created_at))
        updated = format_timestamp(parse_timestamp(element.updated_at))
        if updated < created:
            raise InvalidRequest(
                f"element {element.id!r}: updated_at precedes created_at"
            )
        validated_at = (
            format_timestamp(parse_timestamp(element.validated_at))
            if element.validated_at
            else None
        )
        return KnowledgeElement(
            id=element.id,
            element_type=element.element_type,
            title=element.title,
            sections=normalize_sections(
                self.meta.template_for(element.element_type), element.sections
            ),
            tags=tuple(sorted(set(element.tags))),
            content_status=element.content_status,
            author=element.author,
            created_at=created,
            updated_at=updated,
            validated_by=element.validated_by,
            validated_at=validated_at,
        )

    def restore_link(self, link: Link) -> bool:
        with self._lock.write():
            if not link.id or not isinstance(link.id, str):
                raise InvalidRequest("link id must be a non-empty string")
            for endpoint in (link.source, link.target):
                if endpoint not in self._elements:
                    raise UnknownReference(f"unknown element {endpoint!r}")
            if not link.proposer:
                raise InvalidRequest(f"link {link.id!r} must carry a proposer")
            if link.status is LinkStatus.PROPOSED:
                if link.validator is not None or link.decided_at is not None:
                    raise InvalidRequest(
                        f"proposed link {link.id!r} must not carry a decision"
                    )
            else:
                if link.validator is None or link.decided_at is None:
                    raise InvalidRequest(
                        f"decided link {link.id!r} must carry validator and decided_at"
                    )
            normalized = Link(
                id=link.id,
                source=link.source,
                target=link.target,
                link_type=link.link_type,
                status=link.status,
                proposer=link.proposer,
                validator=link.validator,
                decided_at=(
                    format_timestamp(parse_timestamp(link.decided_at))
                    if link.decided_at
                    else None
                ),
            )
            existing = self.graph.find(link.id)
            if existing is not None:
                if existing == normalized:
                    return False
                raise Conflict(f"link {link.id!r} exists with different content")
            source_type = self._type_of(link.source)
            target_type = self._type_of(link.target)
            if not self.meta.schema.allows(source_type, link.link_type, target_type):
                raise SchemaViolation(
                    f"({source_type.value}, {link.link_type.value}, "
                    f"{target_type.value}) not allowed by the meta-model schema"
                )
            if normalized.status is not LinkStatus.REJECTED:
                duplicate = self.graph.duplicate_of(
                    link.source, link.target, link.link_type
                )
                if duplicate is not None:
                    raise DuplicateLink(
                        f"non-rejected link {link.source!r} "
                        f"-{link.link_type.value}-> {link.target!r} "
                        f"exists as {duplicate.id!r}"
                    )
            self.graph.add(normalized)
            if normalized.decided_at:
                self.clock.observe(normalized.decided_at)
            return True

    def restore_fait_state(self, state: FaitState) -> bool:
        with self._lock.write():
            element = self._elements.get(state.fait)
            if element is None:
                raise UnknownReference(f"unknown element {state.fait!r}")
            if element.element_type is not ElementType.FAIT_TECHNIQUE:
                raise WrongType(
                    f"element {state.fait!r} is {element.element_type.value}, "
                    f"expected {ElementType.FAIT_TECHNIQUE.value}"
                )
            existing = self._fait_states.get(state.fait)
            if existing is not None:
                if existing == state:
                    return False
                raise Conflict(
                    f"workflow state for {state.fait!r} exists with different content"
                )
            self._fait_states[state.fait] = state
            for entry in state.history:
                self.clock.observe(entry.timestamp)
            return True

    def restore_audit(self, events: Sequence[AuditEvent]) -> None:
        with self._lock.write():
            self._audit = list(events)
            for event in events:
                self.clock.observe(event.timestamp)

    def log_admin_event(
        self, op: str, actor: Optional[str], extra: Optional[Mapping[str, Any]] = None
    ) -> None:
        with self._lock.write():
            self._log(op, actor, {}, extra)

    def id_counters(self) -> dict[str, int]:
        return dict(self._counters)

    def set_id_counters(self, counters: Mapping[str, int]) -> None:
        for key in self._counters:
            if key in counters:
                self._counters[key] = int(counters[key])

    # ----------------------------------------------------------------- misc

    def require_admin(self, actor: str) -> Actor:
        return self._require_role(actor, (Role.ADMIN,))

    def stats(self) -> dict[str, Any]:
        with self._lock.read():
            return {
                "elements": {
                    et.value: len(self._elements_by_type[et]) for et in ElementType
                },
                "links": {
                    status.value: sum(
                        1 for l in self.graph.all_links() if l.status is status
                    )
                    for status in LinkStatus
                },
                "workflow": {
                    st.value: sum(
                        1 for s in self._fait_states.values() if s.state is st
                    )
                    for st in FaitLifecycle
                },
                "ontology_items": len(self.ontology),
                "actors": len(self._actors),
                "indexed_documents": self.index.doc_count,
            }

    def links_sorted(self) -> list[Link]:
        with self._lock.read():
            return sorted(self.graph.all_links(), key=lambda l: l.id)


def coerce_element_type(value: ElementType | str) -> ElementType:
    if isinstance(value, ElementType):
        return value
    try:
        return ElementType(value)
    except ValueError:
        raise WrongType(f"unknown element type {value!r}")


def coerce_link_type(value: LinkType | str) -> LinkType:
    if isinstance(value, LinkType):
        return value
    try:
        return LinkType(value)
    except ValueError:
        raise InvalidRequest(f"unknown link type {value!r}")

"""Typed, directed links with a proposal/validation lifecycle, plus the
dossier assembled for one technical fact.

Every stored link satisfies the meta-model schema. Rejected links are kept
for audit but block nothing: duplicate detection considers only Proposed and
Validated links, and traversals never follow Rejected edges.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional

from .errors import DuplicateLink, NotFound, SchemaViolation
from .kb_core import ElementType, LinkType, MetaModelSchema


class LinkStatus(str, Enum):
    PROPOSED = "Proposed"
    VALIDATED = "Validated"
    REJECTED = "Rejected"


class Direction(str, Enum):
    OUT = "Out"
    IN = "In"
    BOTH = "Both"


@dataclass(frozen=True)
class Link:
    id: str
    source: str
    target: str
    link_type: LinkType
    status: LinkStatus
    proposer: str
    validator: Optional[str] = None
    decided_at: Optional[str] = None


@dataclass(frozen=True)
class FaitDossier:
    """Validated-link neighborhood a fact analyst starts from.

    Collections hold element ids, each reachable from ``fait`` along the
    declared validated paths, sorted ascending for determinism.
    """

    fait: str
    equipment: tuple[str, ...]
    activities: tuple[str, ...]
    fundamentals: tuple[str, ...]
    prior_advisories: tuple[str, ...]
    pathologies: tuple[str, ...]
    sources: tuple[str, ...]


class LinkGraph:
    """Link storage keyed by id with per-element adjacency sets.

    Type lookups go through ``type_of`` (element id -> ElementType, raising
    NotFound) so the graph never owns element state.
    """

    def __init__(self, schema: MetaModelSchema, type_of: Callable[[str], ElementType]):
        self._schema = schema
        self._type_of = type_of
        self._links: dict[str, Link] = {}
        self._out: dict[str, set[str]] = {}
        self._in: dict[str, set[str]] = {}

    def __contains__(self, link_id: str) -> bool:
        return link_id in self._links

    def __len__(self) -> int:
        return len(self._links)

    def get(self, link_id: str) -> Link:
        try:
            return self._links[link_id]
        except KeyError:
            raise NotFound(f"unknown link {link_id!r}")

    def find(self, link_id: str) -> Optional[Link]:
        return self._links.get(link_id)

    def all_links(self) -> list[Link]:
        return list(self._links.values())

    def validate_new(self, source: str, target: str, link_type: LinkType) -> None:
        """Schema and duplicate checks shared by propose and bulk import."""
        source_type = self._type_of(source)
        target_type = self._type_of(target)
        if not self._schema.allows(source_type, link_type, target_type):
            raise SchemaViolation(
                f"({source_type.value}, {link_type.value}, {target_type.value}) "
                "not allowed by the meta-model schema"
            )
        if self.duplicate_of(source, target, link_type) is not None:
            raise DuplicateLink(
                f"non-rejected link {source!r} -{link_type.value}-> {target!r} exists"
            )

    def duplicate_of(self, source: str, target: str, link_type: LinkType) -> Optional[Link]:
        """Existing Proposed/Validated link with the same triple, if any."""
        for link_id in self._out.get(source, ()):
            link = self._links[link_id]
            if (
                link.target == target
                and link.link_type == link_type
                and link.status is not LinkStatus.REJECTED
            ):
                return link
        return None

    def add(self, link: Link) -> Link:
        self._links[link.id] = link
        self._out.setdefault(link.source, set()).add(link.id)
        self._in.setdefault(link.target, set()).add(link.id)
        return link

    def remove(self, link_id: str) -> None:
        """Undo helper for transactional inserts."""
        link = self._links.pop(link_id, None)
        if link is not None:
            self._out.get(link.source, set()).discard(link_id)
            self._in.get(link.target, set()).discard(link_id)

    def replace(self, link: Link) -> Link:
        """Swap a stored link for an updated immutable copy (same id/endpoints)."""
        if link.id not in self._links:
            raise NotFound(f"unknown link {link.id!r}")
        self._links[link.id] = link
        return link

    def links_of(
        self,
        element_id: str,
        direction: Direction = Direction.OUT,
        link_types: Optional[Iterable[LinkType]] = None,
        statuses: Iterable[LinkStatus] = (LinkStatus.VALIDATED,),
    ) -> list[Link]:
        wanted_types = frozenset(link_types) if link_types is not None else None
        wanted_statuses = frozenset(statuses)
        link_ids: set[str] = set()
        if direction in (Direction.OUT, Direction.BOTH):
            link_ids |= self._out.get(element_id, set())
        if direction in (Direction.IN, Direction.BOTH):
            link_ids |= self._in.get(element_id, set())
        found = [
            link
            for link in (self._links[i] for i in link_ids)
            if link.status in wanted_statuses
            and (wanted_types is None or link.link_type in wanted_types)
        ]
        found.sort(key=lambda l: l.id)
        return found

    def neighbors(
        self,
        element_id: str,
        direction: Direction = Direction.OUT,
        link_types: Optional[Iterable[LinkType]] = None,
        include_proposed: bool = False,
    ) -> list[tuple[Link, str]]:
        """Matching links paired with the far-end element id; only Validated
        links are traversed unless ``include_proposed`` is set."""
        statuses = {LinkStatus.VALIDATED}
        if include_proposed:
            statuses.add(LinkStatus.PROPOSED)
        pairs = []
        for link in self.links_of(element_id, direction, link_types, statuses):
            other = link.target if link.source == element_id else link.source
            pairs.append((link, other))
        return pairs

    def validated_targets(self, element_id: str, link_type: LinkType) -> list[str]:
        return [
            link.target
            for link in self.links_of(
                element_id, Direction.OUT, (link_type,), (LinkStatus.VALIDATED,)
            )
        ]


def assemble_dossier(graph: LinkGraph, fait_id: str) -> FaitDossier:
    """Walk validated links along the fixed analysis paths.

    equipment        fait -concerns-> FicheTechnique
    activities       fait -during-> ActiviteProcessus
    fundamentals     equipment -based_on-> Fondamental
    prior_advisories fait -subject_of-> AvisConcepteur
    pathologies      advisory -consolidated_in-> RexPathologie
    sources          advisory/pathology -referenced_in-> SourceDocumentaire
    """
    equipment = sorted(graph.validated_targets(fait_id, LinkType.CONCERNS))
    activities = sorted(graph.validated_targets(fait_id, LinkType.DURING))
    fundamentals = sorted(
        {
            fundamental
            for fiche in equipment
            for fundamental in graph.validated_targets(fiche, LinkType.BASED_ON)
        }
    )
    advisories = sorted(graph.validated_targets(fait_id, LinkType.SUBJECT_OF))
    pathologies = sorted(
        {
            pathology
            for avis in advisories
            for pathology in graph.validated_targets(avis, LinkType.CONSOLIDATED_IN)
        }
    )
    sources = sorted(
        {
            source
            for origin in advisories + pathologies
            for source in graph.validated_targets(origin, LinkType.REFERENCED_IN)
        }
    )
    return FaitDossier(
        fait=fait_id,
        equipment=tuple(equipment),
        activities=tuple(activities),
        fundamentals=tuple(fundamentals),
        prior_advisories=tuple(advisories),
        pathologies=tuple(pathologies),
        sources=tuple(sources),
    )

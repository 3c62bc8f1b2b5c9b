"""Domain core: element typing, section templates, ontology, roles and the
link-type schema.

The element type system is closed: seven fiche models, six link types, four
roles. Everything configurable (allowed link triples, role matrix, section
templates, suggestion priors) is loaded from a declarative config file and
immutable afterwards; see :mod:`rexkb.config`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .errors import (
    DuplicateSiblingLabel,
    InvalidRequest,
    NotFound,
    UnknownParent,
)


class ElementType(str, Enum):
    FONDAMENTAL = "Fondamental"
    ACTIVITE_PROCESSUS = "ActiviteProcessus"
    FICHE_TECHNIQUE = "FicheTechnique"
    SOURCE_DOCUMENTAIRE = "SourceDocumentaire"
    REX_PATHOLOGIE = "RexPathologie"
    FAIT_TECHNIQUE = "FaitTechnique"
    AVIS_CONCEPTEUR = "AvisConcepteur"


class LinkType(str, Enum):
    CONCERNS = "concerns"
    DURING = "during"
    BASED_ON = "based_on"
    SUBJECT_OF = "subject_of"
    CONSOLIDATED_IN = "consolidated_in"
    REFERENCED_IN = "referenced_in"


class Role(str, Enum):
    READER = "Reader"
    SPECIALIST = "Specialist"
    EXPERT = "Expert"
    ADMIN = "Admin"


#: Strict privilege order used by the access-monotonicity property.
ROLE_ORDER = (Role.READER, Role.SPECIALIST, Role.EXPERT, Role.ADMIN)


class AccessAction(str, Enum):
    READ = "Read"
    WRITE = "Write"
    VALIDATE = "Validate"
    ADMIN = "Admin"


class ContentStatus(str, Enum):
    DRAFT = "Draft"
    VALIDATED = "Validated"


@dataclass(frozen=True)
class Actor:
    id: str
    name: str
    role: Role


@dataclass(frozen=True)
class OntologyItem:
    id: str
    label: str
    parent: Optional[str] = None


@dataclass(frozen=True)
class KnowledgeElement:
    """A typed fiche: titled sections, ontology tags, validation status.

    ``sections`` always holds the full per-type template in template order;
    sections the author did not fill carry an empty body.
    """

    id: str
    element_type: ElementType
    title: str
    sections: tuple[tuple[str, str], ...]
    tags: tuple[str, ...]
    content_status: ContentStatus
    author: str
    created_at: str
    updated_at: str
    validated_by: Optional[str] = None
    validated_at: Optional[str] = None

    def indexed_text(self) -> str:
        """Text fed to the similarity index: title plus section bodies."""
        return "\n".join([self.title] + [body for _, body in self.sections])


def normalize_sections(
    template: Sequence[str], sections: Iterable[tuple[str, str]]
) -> tuple[tuple[str, str], ...]:
    """Validate author-supplied sections against a type template.

    Section names outside the template and duplicated names are rejected;
    omitted sections are stored with an empty body so stored elements always
    carry the complete template in template order.
    """
    from .errors import TemplateViolation

    bodies: dict[str, str] = {}
    for entry in sections:
        try:
            name, body = entry
        except (TypeError, ValueError):
            raise TemplateViolation(f"malformed section entry: {entry!r}")
        if not isinstance(name, str) or not isinstance(body, str):
            raise TemplateViolation(f"section name and body must be text: {entry!r}")
        if name not in template:
            raise TemplateViolation(f"section {name!r} not in template {list(template)}")
        if name in bodies:
            raise TemplateViolation(f"duplicate section {name!r}")
        bodies[name] = body
    return tuple((name, bodies.get(name, "")) for name in template)


class Ontology:
    """Forest of tagged domain items; labels unique among siblings."""

    def __init__(self) -> None:
        self._items: dict[str, OntologyItem] = {}
        # (parent id or None) -> {label -> item id}
        self._sibling_labels: dict[Optional[str], dict[str, str]] = {}
        self._ancestor_cache: dict[str, tuple[str, ...]] = {}

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._items

    def __len__(self) -> int:
        return len(self._items)

    def get(self, item_id: str) -> OntologyItem:
        try:
            return self._items[item_id]
        except KeyError:
            raise NotFound(f"unknown ontology item {item_id!r}")

    def items(self) -> list[OntologyItem]:
        return list(self._items.values())

    def validate_new(self, label: str, parent: Optional[str]) -> None:
        if not label or not label.strip():
            raise InvalidRequest("ontology label must be non-empty")
        if parent is not None and parent not in self._items:
            raise UnknownParent(f"unknown parent ontology item {parent!r}")
        if label in self._sibling_labels.get(parent, {}):
            raise DuplicateSiblingLabel(
                f"label {label!r} already used under parent {parent!r}"
            )

    def add(self, item: OntologyItem) -> OntologyItem:
        """Insert a validated item. Parent-before-child insertion makes
        cycles structurally impossible; ``ancestors`` still guards the walk.
        """
        self.validate_new(item.label, item.parent)
        self._items[item.id] = item
        self._sibling_labels.setdefault(item.parent, {})[item.label] = item.id
        return item

    def remove(self, item_id: str) -> None:
        """Undo helper for transactional inserts (leaves are removable)."""
        item = self._items.pop(item_id, None)
        if item is not None:
            self._sibling_labels.get(item.parent, {}).pop(item.label, None)
            self._ancestor_cache.clear()

    def ancestors(self, item_id: str) -> list[str]:
        """Chain from the item's parent up to its root, nearest first."""
        if item_id not in self._items:
            raise NotFound(f"unknown ontology item {item_id!r}")
        cached = self._ancestor_cache.get(item_id)
        if cached is not None:
            return list(cached)
        chain: list[str] = []
        seen = {item_id}
        current = self._items[item_id].parent
        while current is not None:
            if current in seen:  # defensive: forest invariant violated
                raise InvalidRequest(f"ontology cycle detected at {current!r}")
            seen.add(current)
            chain.append(current)
            current = self._items[current].parent
        self._ancestor_cache[item_id] = tuple(chain)
        return chain

    def closure(self, tag_ids: Iterable[str]) -> frozenset[str]:
        """Tag set augmented with every ancestor of every tag."""
        out: set[str] = set()
        for tag in tag_ids:
            out.add(tag)
            out.update(self.ancestors(tag))
        return frozenset(out)


SchemaTriple = tuple[ElementType, LinkType, ElementType]


@dataclass(frozen=True)
class MetaModelSchema:
    """Immutable set of allowed (source type, link type, target type) triples."""

    triples: frozenset[SchemaTriple]

    def allows(
        self, source_type: ElementType, link_type: LinkType, target_type: ElementType
    ) -> bool:
        return (source_type, link_type, target_type) in self.triples

    def outgoing(self, source_type: ElementType) -> list[tuple[LinkType, ElementType]]:
        """Allowed (link type, target type) pairs, deterministically ordered."""
        pairs = [
            (lt, tt) for (st, lt, tt) in self.triples if st == source_type
        ]
        pairs.sort(key=lambda p: (p[0].value, p[1].value))
        return pairs


class AccessPolicy:
    """Role matrix: which roles may perform which action on which element type."""

    def __init__(self, matrix: Mapping[Role, Mapping[AccessAction, frozenset[ElementType]]]):
        self._matrix = {
            role: {action: frozenset(types) for action, types in actions.items()}
            for role, actions in matrix.items()
        }

    def allows(self, role: Role, action: AccessAction, element_type: ElementType) -> bool:
        return element_type in self._matrix.get(role, {}).get(action, frozenset())


@dataclass(frozen=True)
class MetaModel:
    """Bundle of the runtime-immutable declarative configuration."""

    schema: MetaModelSchema
    policy: AccessPolicy
    templates: Mapping[ElementType, tuple[str, ...]]
    priors: Mapping[SchemaTriple, float]
    version: int = 1

    def template_for(self, element_type: ElementType) -> tuple[str, ...]:
        return self.templates[element_type]

    def prior_for(self, triple: SchemaTriple) -> float:
        return self.priors.get(triple, 1.0)

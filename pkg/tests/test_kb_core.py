from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ancestor_chain
from rexkb import AccessAction, ContentStatus, ElementType, LinkType, Role
from rexkb.errors import (
    AlreadyValidated,
    DuplicateSiblingLabel,
    EmptyTitle,
    NotFound,
    PermissionDenied,
    TemplateViolation,
    UnknownActor,
    UnknownParent,
    UnknownTag,
    WrongType,
)

from conftest import META, first_section, fresh_kb

ROLE_ORDER = [Role.READER, Role.SPECIALIST, Role.EXPERT, Role.ADMIN]

# The link semantics read off the worked equipment-event example.
EXPECTED_TRIPLES = {
    ("FaitTechnique", "concerns", "FicheTechnique"),
    ("FaitTechnique", "during", "ActiviteProcessus"),
    ("FicheTechnique", "based_on", "Fondamental"),
    ("FaitTechnique", "subject_of", "AvisConcepteur"),
    ("AvisConcepteur", "consolidated_in", "RexPathologie"),
    ("RexPathologie", "referenced_in", "SourceDocumentaire"),
    ("AvisConcepteur", "referenced_in", "SourceDocumentaire"),
}


# ------------------------------------------------------------- element types


def test_element_type_enumeration_is_closed():
    assert len(ElementType) == 7
    assert {et.value for et in ElementType} == {
        "Fondamental",
        "ActiviteProcessus",
        "FicheTechnique",
        "SourceDocumentaire",
        "RexPathologie",
        "FaitTechnique",
        "AvisConcepteur",
    }


def test_create_element_rejects_unknown_type(kb):
    with pytest.raises(WrongType):
        kb.create_element("expert", "FicheImaginaire", "Titre quelconque")


# ------------------------------------------------------------ create_element


def test_create_fait_technique(kb):
    element = kb.create_element(
        "expert",
        ElementType.FAIT_TECHNIQUE,
        "Alarme sur circuit AUGM24",
        first_section(ElementType.FAIT_TECHNIQUE, "Alarme intempestive."),
    )
    assert element.content_status is ContentStatus.DRAFT
    assert element.title == "Alarme sur circuit AUGM24"
    assert kb.find_element(element.id) == element
    # stored sections carry the full template in template order
    assert [name for name, _ in element.sections] == list(
        META.template_for(ElementType.FAIT_TECHNIQUE)
    )


def test_create_fondamental(kb):
    element = kb.create_element(
        "expert",
        ElementType.FONDAMENTAL,
        "Corrosion des métaux",
        first_section(ElementType.FONDAMENTAL, "Oxydation électrochimique."),
    )
    assert element.element_type is ElementType.FONDAMENTAL


def test_create_element_empty_title(kb):
    with pytest.raises(EmptyTitle):
        kb.create_element("expert", ElementType.FAIT_TECHNIQUE, "")
    with pytest.raises(EmptyTitle):
        kb.create_element("expert", ElementType.FAIT_TECHNIQUE, "   ")


def test_create_element_unknown_tag(kb):
    with pytest.raises(UnknownTag):
        kb.create_element(
            "expert", ElementType.FAIT_TECHNIQUE, "Alarme", tags=["on-999999"]
        )


def test_create_element_template_violations(kb):
    with pytest.raises(TemplateViolation):
        kb.create_element(
            "expert",
            ElementType.FAIT_TECHNIQUE,
            "Alarme",
            [("Chapitre inconnu", "x")],
        )
    with pytest.raises(TemplateViolation):
        kb.create_element(
            "expert",
            ElementType.FAIT_TECHNIQUE,
            "Alarme",
            [("Contexte", "a"), ("Contexte", "b")],
        )


def test_create_element_permission(kb):
    with pytest.raises(PermissionDenied):
        kb.create_element("reader", ElementType.FAIT_TECHNIQUE, "Alarme")
    with pytest.raises(PermissionDenied):
        kb.create_element("specialist", ElementType.AVIS_CONCEPTEUR, "Avis")
    # specialists may author facts
    kb.create_element("specialist", ElementType.FAIT_TECHNIQUE, "Alarme")


def test_created_element_is_immediately_searchable(kb):
    element = kb.create_element(
        "expert",
        ElementType.FONDAMENTAL,
        "Corrosion des métaux",
        first_section(ElementType.FONDAMENTAL, "Oxydation des aciers au carbone."),
    )
    hits = kb.search("corrosion aciers", 5)
    assert hits and hits[0].doc_id == element.id


def test_timestamps_are_monotone(kb):
    first = kb.create_element("expert", ElementType.FONDAMENTAL, "Premier")
    second = kb.create_element("expert", ElementType.FONDAMENTAL, "Second")
    assert second.created_at > first.created_at
    assert first.updated_at >= first.created_at


# ---------------------------------------------------------- validate_element


def test_validate_element(kb):
    element = kb.create_element("expert", ElementType.FONDAMENTAL, "Corrosion")
    validated = kb.validate_element("expert", element.id)
    assert validated.content_status is ContentStatus.VALIDATED
    assert validated.validated_by == "expert"
    assert validated.validated_at is not None
    assert validated.updated_at >= element.updated_at


def test_validate_element_permission(kb):
    element = kb.create_element("expert", ElementType.FONDAMENTAL, "Corrosion")
    with pytest.raises(PermissionDenied):
        kb.validate_element("specialist", element.id)
    with pytest.raises(PermissionDenied):
        kb.validate_element("reader", element.id)


def test_validate_element_twice(kb):
    element = kb.create_element("expert", ElementType.FONDAMENTAL, "Corrosion")
    kb.validate_element("expert", element.id)
    with pytest.raises(AlreadyValidated):
        kb.validate_element("admin", element.id)


def test_validate_unknown_element(kb):
    with pytest.raises(NotFound):
        kb.validate_element("expert", "el-999999")


# ------------------------------------------------------------------ ontology


def test_add_ontology_root_and_child(kb):
    root = kb.add_ontology_item("expert", "Matériaux")
    child = kb.add_ontology_item("expert", "Corrosion", root.id)
    assert root.parent is None
    assert child.parent == root.id


def test_duplicate_sibling_label(kb):
    root = kb.add_ontology_item("expert", "Matériaux")
    kb.add_ontology_item("expert", "Corrosion", root.id)
    with pytest.raises(DuplicateSiblingLabel):
        kb.add_ontology_item("expert", "Corrosion", root.id)
    # same label under a different parent is fine
    other = kb.add_ontology_item("expert", "Procédés")
    kb.add_ontology_item("expert", "Corrosion", other.id)


def test_unknown_parent(kb):
    with pytest.raises(UnknownParent):
        kb.add_ontology_item("expert", "Corrosion", "on-999999")


def test_ontology_permission(kb):
    with pytest.raises(PermissionDenied):
        kb.add_ontology_item("specialist", "Matériaux")
    with pytest.raises(PermissionDenied):
        kb.add_ontology_item("reader", "Matériaux")
    kb.add_ontology_item("admin", "Matériaux")


def test_ancestors_of_root_is_empty(kb):
    root = kb.add_ontology_item("expert", "Matériaux")
    assert kb.ontology_ancestors(root.id) == []


def test_ancestors_single_step(kb):
    root = kb.add_ontology_item("expert", "Matériaux")
    child = kb.add_ontology_item("expert", "Corrosion", root.id)
    assert kb.ontology_ancestors(child.id) == [root.id]


def test_ancestors_depth_three_nearest_first(kb):
    # hand-built 3-level chain: grandparent <- parent <- leaf
    grandparent = kb.add_ontology_item("expert", "Matériaux")
    parent = kb.add_ontology_item("expert", "Corrosion", grandparent.id)
    leaf = kb.add_ontology_item("expert", "Piqûres", parent.id)
    assert kb.ontology_ancestors(leaf.id) == [parent.id, grandparent.id]
    assert kb.ontology_ancestors(leaf.id) == ancestor_chain(kb, leaf.id)


def test_ancestors_unknown_item(kb):
    with pytest.raises(NotFound):
        kb.ontology_ancestors("on-999999")


@settings(max_examples=40)
@given(
    parents=st.lists(st.integers(min_value=0, max_value=30), min_size=1, max_size=30)
)
def test_ontology_forest_walks_terminate(parents):
    # item i's parent is a previously created item (or a root): cycles are
    # impossible by construction, and every ancestor walk must terminate
    # without revisiting an id.
    kb = fresh_kb()
    created: list[str] = []
    for i, choice in enumerate(parents):
        parent = created[choice % len(created)] if created and choice % 3 else None
        item = kb.add_ontology_item("expert", f"item-{i}", parent)
        created.append(item.id)
    for item_id in created:
        chain = kb.ontology_ancestors(item_id)
        assert len(chain) == len(set(chain))
        assert item_id not in chain


# check_access ----------------------------------------------------------------


def test_admin_supremacy(kb):
    for element_type in ElementType:
        assert kb.check_access("admin", AccessAction.ADMIN, element_type)


def test_reader_cannot_write(kb):
    assert not kb.check_access("reader", AccessAction.WRITE, ElementType.FAIT_TECHNIQUE)


def test_specialist_cannot_author_advisories(kb):
    assert not kb.check_access(
        "specialist", AccessAction.WRITE, ElementType.AVIS_CONCEPTEUR
    )
    assert kb.check_access(
        "specialist", AccessAction.WRITE, ElementType.FAIT_TECHNIQUE
    )


def test_check_access_unknown_actor(kb):
    with pytest.raises(UnknownActor):
        kb.check_access("ghost", AccessAction.READ, ElementType.FAIT_TECHNIQUE)


def test_access_monotonic_in_role_order(kb):
    for action, element_type in itertools.product(AccessAction, ElementType):
        allowed = [
            kb.meta.policy.allows(role, action, element_type) for role in ROLE_ORDER
        ]
        # once granted at some rank, every higher rank also grants it
        for lower, higher in zip(allowed, allowed[1:]):
            assert not (lower and not higher)


# ------------------------------------------------------------------- schema


def test_default_schema_contains_derived_triples(kb):
    stored = {
        (s.value, l.value, t.value) for (s, l, t) in kb.meta.schema.triples
    }
    assert EXPECTED_TRIPLES <= stored


def test_link_type_allowed_examples(kb):
    assert kb.link_type_allowed("FaitTechnique", "concerns", "FicheTechnique")
    assert kb.link_type_allowed("FicheTechnique", "based_on", "Fondamental")
    assert not kb.link_type_allowed("Fondamental", "concerns", "AvisConcepteur")


def test_link_type_allowed_is_pure(kb):
    before = set(kb.meta.schema.triples)
    kb.link_type_allowed("FaitTechnique", "concerns", "FicheTechnique")
    assert set(kb.meta.schema.triples) == before


def test_all_link_types_present():
    assert {lt.value for lt in LinkType} == {
        "concerns",
        "during",
        "based_on",
        "subject_of",
        "consolidated_in",
        "referenced_in",
    }

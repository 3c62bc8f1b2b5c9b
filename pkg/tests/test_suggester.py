from __future__ import annotations

import random

import pytest

from oracles import exhaustive_suggestions
from rexkb import ElementType, LinkStatus
from rexkb.errors import InvalidRequest, NotFound, WrongType
from rexkb.suggester import SuggestionWeights, jaccard

from conftest import first_section, fresh_kb


def build_six_element_kb():
    """Hand-built toy KB: 1 fact, 2 equipment sheets, 1 activity, 1 advisory,
    1 fundamental, tagged against a 3-item ontology."""
    kb = fresh_kb()
    materials = kb.add_ontology_item("expert", "Matériaux")
    corrosion = kb.add_ontology_item("expert", "Corrosion", materials.id)
    vibration = kb.add_ontology_item("expert", "Vibrations", materials.id)

    fait = kb.create_element(
        "specialist",
        ElementType.FAIT_TECHNIQUE,
        "Alarme vibration palier turbine",
        first_section(ElementType.FAIT_TECHNIQUE, "Vibration élevée du palier turbine."),
        [vibration.id],
    )
    fiche_turbine = kb.create_element(
        "expert",
        ElementType.FICHE_TECHNIQUE,
        "Palier de turbine principale",
        first_section(ElementType.FICHE_TECHNIQUE, "Palier lisse de la turbine principale."),
        [vibration.id],
    )
    fiche_pompe = kb.create_element(
        "expert",
        ElementType.FICHE_TECHNIQUE,
        "Pompe de refroidissement",
        first_section(
            ElementType.FICHE_TECHNIQUE, "Pompe centrifuge du circuit de refroidissement."
        ),
        [corrosion.id],
    )
    activite = kb.create_element(
        "expert",
        ElementType.ACTIVITE_PROCESSUS,
        "Essai périodique turbine",
        first_section(ElementType.ACTIVITE_PROCESSUS, "Essai périodique de la turbine."),
    )
    avis = kb.create_element(
        "expert",
        ElementType.AVIS_CONCEPTEUR,
        "Avis vibration palier",
        first_section(ElementType.AVIS_CONCEPTEUR, "Surveillance renforcée du palier."),
    )
    fondamental = kb.create_element(
        "expert",
        ElementType.FONDAMENTAL,
        "Phénomènes vibratoires des machines tournantes",
        first_section(ElementType.FONDAMENTAL, "Vibration des machines tournantes et balourd."),
    )
    return kb, fait, fiche_turbine, fiche_pompe, activite, avis, fondamental


# Frozen from the exhaustive oracle over the toy KB with default weights.
FROZEN_DEFAULT = [
    ("el-000002", "concerns", 0.6591002587508931, 0.4318337645848218, 1.0),
    ("el-000005", "subject_of", 0.34057024268667835, 0.4009504044777971, 0.0),
    ("el-000004", "during", 0.22497898096692465, 0.20829830161154103, 0.0),
    ("el-000003", "concerns", 0.2, 0.0, 0.3333333333333333),
]


# ------------------------------------------------------------- similar_events


def test_similar_events_single_fait(kb):
    fait, _ = kb.declare_fait("specialist", "Alarme isolée")
    assert kb.similar_events(fait.id) == []


def test_similar_events_identical_text():
    kb = fresh_kb()
    sections = first_section(ElementType.FAIT_TECHNIQUE, "Fuite de vapeur au joint.")
    first, _ = kb.declare_fait("specialist", "Fuite vapeur", sections)
    second, _ = kb.declare_fait("specialist", "Fuite vapeur", sections)
    hits = kb.similar_events(second.id)
    assert [h.fait for h in hits] == [first.id]
    assert abs(hits[0].score - 1.0) <= 1e-9


def test_similar_events_restricted_to_faits_and_carries_advisories():
    kb, fait, fiche, *_ = build_six_element_kb()
    twin, _ = kb.declare_fait(
        "specialist",
        "Alarme vibration palier turbine",
        first_section(ElementType.FAIT_TECHNIQUE, "Vibration élevée du palier turbine."),
    )
    kb_state = kb.start_analysis("specialist", twin.id)
    assert kb_state.similar_snapshot  # the twin saw the original fact
    avis, _, _ = kb.issue_avis("expert", twin.id, "Avis palier")
    hits = kb.similar_events(fait.id)
    assert all(kb.find_element(h.fait).element_type is ElementType.FAIT_TECHNIQUE for h in hits)
    by_id = {h.fait: h for h in hits}
    assert by_id[twin.id].advisories == (avis.id,)
    assert fiche.id not in by_id


def test_similar_events_five_fait_ordering_matches_oracle():
    from oracles import brute_force_query

    kb = fresh_kb()
    texts = [
        "Fuite de vapeur sur le joint de la pompe primaire",
        "Fuite d'huile sur le palier de la pompe",
        "Vibration du palier de turbine en montée en puissance",
        "Alarme de pression sur le circuit d'injection",
        "Fuite de vapeur sur la vanne du circuit secondaire",
    ]
    faits = [
        kb.declare_fait(
            "specialist", f"Événement {i}", first_section(ElementType.FAIT_TECHNIQUE, text)
        )[0]
        for i, text in enumerate(texts)
    ]
    corpus = {f.id: f.indexed_text() for f in faits}
    probe = faits[0]
    expected = brute_force_query(
        corpus, probe.indexed_text(), 10, kb.index.tokenizer, exclude=probe.id
    )
    got = [(h.fait, h.score) for h in kb.similar_events(probe.id)]
    assert got == expected


def test_similar_events_validation(kb):
    with pytest.raises(NotFound):
        kb.similar_events("el-999999")
    fiche = kb.create_element("expert", ElementType.FICHE_TECHNIQUE, "Pompe")
    with pytest.raises(WrongType):
        kb.similar_events(fiche.id)
    fait, _ = kb.declare_fait("specialist", "Alarme")
    with pytest.raises(InvalidRequest):
        kb.similar_events(fait.id, k=0)


# -------------------------------------------------------------- suggest_links


def test_no_outgoing_link_types_yields_empty(kb):
    fondamental = kb.create_element("expert", ElementType.FONDAMENTAL, "Corrosion")
    kb.create_element("expert", ElementType.FICHE_TECHNIQUE, "Pompe")
    assert kb.suggest_links(fondamental.id) == []


def test_identical_text_and_tags_score_is_weight_sum(kb):
    tag = kb.add_ontology_item("expert", "Vibrations")
    body = "Vibration du palier de turbine."
    fait, _ = kb.declare_fait(
        "specialist",
        "Vibration palier",
        first_section(ElementType.FAIT_TECHNIQUE, body),
        [tag.id],
    )
    # same indexed text: same title, body in the first template section
    fiche = kb.create_element(
        "expert",
        ElementType.FICHE_TECHNIQUE,
        "Vibration palier",
        first_section(ElementType.FICHE_TECHNIQUE, body),
        [tag.id],
    )
    suggestions = kb.suggest_links(fait.id)
    match = [s for s in suggestions if s.candidate_target == fiche.id]
    assert len(match) == 1
    suggestion = match[0]
    assert suggestion.link_type.value == "concerns"
    assert abs(suggestion.breakdown.text_score - 1.0) <= 1e-9
    assert suggestion.breakdown.tag_score == 1.0
    prior = suggestion.breakdown.type_prior
    # score = alpha + beta + gamma * prior with normalized default weights
    expected = 0.6 + 0.3 + 0.1 * prior
    assert abs(suggestion.score - expected) <= 1e-9


def test_six_element_kb_matches_frozen_oracle():
    kb, fait, *_ = build_six_element_kb()
    got = [
        (s.candidate_target, s.link_type.value, s.score, s.breakdown.text_score,
         s.breakdown.tag_score)
        for s in kb.suggest_links(fait.id, 10)
    ]
    assert [(g[0], g[1]) for g in got] == [(f[0], f[1]) for f in FROZEN_DEFAULT]
    for g, f in zip(got, FROZEN_DEFAULT):
        assert abs(g[2] - f[2]) <= 1e-9
        assert abs(g[3] - f[3]) <= 1e-9
        assert g[4] == f[4]


def test_six_element_kb_matches_live_oracle_random_weights():
    kb, fait, fiche_turbine, *_ = build_six_element_kb()
    rng = random.Random(7)
    for _ in range(10):
        weights = (rng.random(), rng.random(), rng.random())
        if sum(weights) == 0:
            continue
        expected = exhaustive_suggestions(kb, fait.id, 10, weights)
        got = kb.suggest_links(fait.id, 10, weights)
        assert [(s.candidate_target, s.link_type.value) for s in got] == [
            (e[0], e[1]) for e in expected
        ]
        for s, e in zip(got, expected):
            assert abs(s.score - e[2]) <= 1e-9
            assert abs(s.breakdown.text_score - e[3]) <= 1e-9
            assert s.breakdown.tag_score == e[4]
            assert s.breakdown.type_prior == e[5]
        assert [s.rank for s in got] == list(range(1, len(got) + 1))


def test_suggestions_never_violate_schema_and_never_duplicate():
    kb, fait, fiche_turbine, *_ = build_six_element_kb()
    link = kb.propose_link("specialist", fait.id, fiche_turbine.id, "concerns")
    existing = {
        (l.target, l.link_type)
        for l in kb.graph.all_links()
        if l.source == fait.id and l.status is not LinkStatus.REJECTED
    }
    for s in kb.suggest_links(fait.id, 20):
        assert kb.link_type_allowed(
            ElementType.FAIT_TECHNIQUE,
            s.link_type,
            kb.find_element(s.candidate_target).element_type,
        )
        assert (s.candidate_target, s.link_type) not in existing
    # after rejection the pair becomes suggestible again
    kb.decide_link("expert", link.id, "Reject")
    assert any(
        s.candidate_target == fiche_turbine.id and s.link_type.value == "concerns"
        for s in kb.suggest_links(fait.id, 20)
    )


def test_monotonicity_text_only_weights_match_index_order():
    kb, fait, *_ = build_six_element_kb()
    suggestions = kb.suggest_links(fait.id, 20, weights=(1.0, 0.0, 0.0))
    concerns_only = [
        s.candidate_target for s in suggestions if s.link_type.value == "concerns"
    ]
    index_hits = [
        h.doc_id
        for h in kb.index.similar_to(fait.id, kinds=("FicheTechnique",))
    ]
    assert concerns_only == index_hits


def test_weight_scaling_invariance():
    kb, fait, *_ = build_six_element_kb()
    base = kb.suggest_links(fait.id, 10, weights=(0.6, 0.3, 0.1))
    scaled = kb.suggest_links(fait.id, 10, weights=(6.0, 3.0, 1.0))
    assert [(s.candidate_target, s.link_type) for s in base] == [
        (s.candidate_target, s.link_type) for s in scaled
    ]
    for a, b in zip(base, scaled):
        assert abs(a.score - b.score) <= 1e-9


def test_invalid_weights_rejected(kb):
    fait, _ = kb.declare_fait("specialist", "Alarme")
    with pytest.raises(InvalidRequest):
        kb.suggest_links(fait.id, weights=(-0.1, 0.5, 0.6))
    with pytest.raises(InvalidRequest):
        kb.suggest_links(fait.id, weights=(0.0, 0.0, 0.0))
    with pytest.raises(InvalidRequest):
        kb.suggest_links(fait.id, k=0)
    with pytest.raises(NotFound):
        kb.suggest_links("el-999999")


def test_tag_score_symmetry():
    kb = fresh_kb()
    root = kb.add_ontology_item("expert", "Racine")
    a_tag = kb.add_ontology_item("expert", "A", root.id)
    b_tag = kb.add_ontology_item("expert", "B", root.id)
    sets = [
        frozenset(),
        frozenset({root.id}),
        frozenset({a_tag.id, root.id}),
        frozenset({a_tag.id, b_tag.id, root.id}),
    ]
    for left in sets:
        for right in sets:
            assert jaccard(left, right) == jaccard(right, left)
    assert jaccard(frozenset(), frozenset()) == 0.0


def test_empty_text_element_gets_zero_text_score(kb):
    # title made of stopwords only: nothing survives tokenization
    fait, _ = kb.declare_fait("specialist", "le la les")
    fiche = kb.create_element("expert", ElementType.FICHE_TECHNIQUE, "Pompe")
    suggestions = kb.suggest_links(fait.id, 10)
    match = [s for s in suggestions if s.candidate_target == fiche.id]
    assert match and match[0].breakdown.text_score == 0.0


def test_normalized_weights_validation():
    weights = SuggestionWeights(2.0, 1.0, 1.0).normalized()
    assert abs(weights.text + weights.tag + weights.prior - 1.0) <= 1e-12
    assert weights.text == 0.5

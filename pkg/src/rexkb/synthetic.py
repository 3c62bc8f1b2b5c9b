"""Seeded generators: French-like synthetic corpora for benchmarks and a
small worked demo knowledge base.

Everything here is deterministic given the seed, so generated fixtures can
be regenerated byte-identically.
"""
from __future__ import annotations

import json
import random
from typing import Iterator, Optional

from .kb_core import ElementType

#: Technical French-ish vocabulary; diacritics on purpose, the tokenizer
#: must fold them.
WORD_POOL = (
    "alarme circuit pompe vanne capteur pression température débit fuite "
    "corrosion métaux acier soudure fissure vibration palier turbine rotor "
    "échangeur condenseur générateur vapeur primaire secondaire confinement "
    "sûreté essai périodique maintenance arrêt tranche réacteur combustible "
    "grappe contrôle commande armoire relais carte électronique signal "
    "mesure étalonnage dérive seuil déclenchement automatique manuel "
    "procédure gamme intervention consignation requalification conformité "
    "écart anomalie défaut panne dégradation usure encrassement colmatage "
    "filtre joint garniture étanchéité lubrification graissage huile "
    "refroidissement ventilation climatisation diesel secours alimentation "
    "électrique tension courant disjoncteur transformateur batterie onduleur "
    "tuyauterie support ancrage génie civil structure charpente peinture "
    "revêtement protection cathodique injection chimie conditionnement "
    "oxygène hydrogène azote bore acide analyse prélèvement échantillon "
    "spectre ultrason radiographie ressuage magnétoscopie épreuve hydraulique "
    "réglage calage alignement équilibrage serrage couple boulonnerie "
    "obturateur clapet soupape détendeur purgeur évent drainage collecteur "
    "niveau capacité réservoir bâche piscine manutention levage pont palan "
    "exploitation conduite surveillance ronde relevé consigne dérogation "
    "modification conception dossier plan schéma nomenclature référentiel"
).split()

SECTION_WORD_RANGE = (6, 18)
TITLE_WORD_RANGE = (3, 6)


def random_words(rng: random.Random, low: int, high: int) -> str:
    return " ".join(rng.choice(WORD_POOL) for _ in range(rng.randint(low, high)))


def make_corpus(n: int, seed: int = 0) -> list[tuple[str, str]]:
    """(doc_id, text) pairs of French-like technical prose."""
    rng = random.Random(seed)
    return [
        (f"doc-{i:06d}", random_words(rng, *SECTION_WORD_RANGE)) for i in range(n)
    ]


_TEMPLATE_SECTIONS = {
    ElementType.FONDAMENTAL: ("Principe", "Références"),
    ElementType.ACTIVITE_PROCESSUS: ("Description", "Entrées", "Sorties"),
    ElementType.FICHE_TECHNIQUE: ("Description", "Caractéristiques"),
    ElementType.SOURCE_DOCUMENTAIRE: ("Référence externe", "Résumé"),
    ElementType.REX_PATHOLOGIE: ("État de l'art", "Synthèse"),
    ElementType.FAIT_TECHNIQUE: ("Description événement", "Contexte", "Criticité"),
    ElementType.AVIS_CONCEPTEUR: ("Diagnostic", "Prescription"),
}


def synthetic_element_records(
    n: int, seed: int = 0, author: str = "loader", start: int = 1
) -> Iterator[dict]:
    """Interchange element records with stable ids sy-000001, sy-000002, ..."""
    rng = random.Random(seed)
    types = list(ElementType)
    base = "2020-01-01T00:00:00.000000+00:00"
    for i in range(start, start + n):
        element_type = rng.choice(types)
        sections = [
            [name, random_words(rng, *SECTION_WORD_RANGE)]
            for name in _TEMPLATE_SECTIONS[element_type]
        ]
        yield {
            "kind": "element",
            "v": 1,
            "id": f"sy-{i:06d}",
            "element_type": element_type.value,
            "title": random_words(rng, *TITLE_WORD_RANGE),
            "sections": sections,
            "tags": [],
            "content_status": "Draft",
            "author": author,
            "created_at": base,
            "updated_at": base,
            "validated_by": None,
            "validated_at": None,
        }


def synthetic_import_lines(n: int, seed: int = 0) -> Iterator[str]:
    for record in synthetic_element_records(n, seed):
        yield json.dumps(record, ensure_ascii=False, sort_keys=True)


def seed_demo(kb, expert: str = "expert", specialist: Optional[str] = None) -> dict:
    """Populate a knowledge base with the worked example used in docs and
    tests: one technical fact tied to its equipment, activity, fundamental,
    advisory, pathology and source document. Returns the created ids."""
    specialist = specialist or expert
    materials = kb.add_ontology_item(expert, "Matériaux")
    corrosion_tag = kb.add_ontology_item(expert, "Corrosion", materials.id)
    control = kb.add_ontology_item(expert, "Contrôle-commande")

    fondamental = kb.create_element(
        expert,
        ElementType.FONDAMENTAL,
        "Corrosion des métaux",
        [("Principe", "Oxydation électrochimique des aciers en milieu humide.")],
        [corrosion_tag.id],
    )
    activite = kb.create_element(
        expert,
        ElementType.ACTIVITE_PROCESSUS,
        "Évolution du plan de maintenance",
        [("Description", "Mise à jour du programme de maintenance préventive.")],
    )
    fiche = kb.create_element(
        expert,
        ElementType.FICHE_TECHNIQUE,
        "Architecture du contrôle-commande",
        [("Description", "Armoires de contrôle commande du circuit AUGM24.")],
        [control.id],
    )
    source = kb.create_element(
        expert,
        ElementType.SOURCE_DOCUMENTAIRE,
        "Procédure TA-6253301A",
        [("Référence externe", "Procédure TA-6253301A")],
    )
    fait, state = kb.declare_fait(
        specialist,
        "Alarme sur circuit AUGM24",
        [
            ("Description événement", "Alarme intempestive sur le circuit AUGM24."),
            ("Contexte", "Essai périodique en arrêt de tranche."),
        ],
        [control.id],
    )
    for target, link_type in (
        (fiche.id, "concerns"),
        (activite.id, "during"),
    ):
        link = kb.propose_link(specialist, fait.id, target, link_type)
        kb.decide_link(expert, link.id, "Validate")
    base_link = kb.propose_link(expert, fiche.id, fondamental.id, "based_on")
    kb.decide_link(expert, base_link.id, "Validate")

    kb.start_analysis(specialist, fait.id)
    avis, _, _ = kb.issue_avis(
        expert,
        fait.id,
        "Possibilité de déroger à AB.SB.TC02 pour l'IPER",
        [("Diagnostic", "Dérive du capteur de pression."),
         ("Prescription", "Dérogation temporaire acceptable.")],
    )
    pathologie, _, _ = kb.consolidate(
        expert,
        [avis.id],
        new_pathologie={
            "title": "Phénomènes vibratoires",
            "sections": [("Synthèse", "Synthèse des événements vibratoires.")],
        },
    )
    ref_link = kb.propose_link(expert, pathologie.id, source.id, "referenced_in")
    kb.decide_link(expert, ref_link.id, "Validate")
    return {
        "fait": fait.id,
        "fiche": fiche.id,
        "activite": activite.id,
        "fondamental": fondamental.id,
        "avis": avis.id,
        "pathologie": pathologie.id,
        "source": source.id,
        "tags": {"materials": materials.id, "corrosion": corrosion_tag.id,
                 "control": control.id},
    }

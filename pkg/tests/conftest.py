from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from rexkb import ElementType, KnowledgeBase, Role
from rexkb.config import load_meta_model, load_stopwords

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

META = load_meta_model()
STOPWORDS = load_stopwords()

ACTORS = {
    "reader": Role.READER,
    "specialist": Role.SPECIALIST,
    "expert": Role.EXPERT,
    "admin": Role.ADMIN,
}


def fresh_kb() -> KnowledgeBase:
    kb = KnowledgeBase(meta=META, stopwords=STOPWORDS)
    for actor_id, role in ACTORS.items():
        kb.register_actor(actor_id, actor_id.capitalize(), role)
    return kb


@pytest.fixture
def kb() -> KnowledgeBase:
    return fresh_kb()


def first_section(element_type: ElementType, body: str) -> list[tuple[str, str]]:
    """Fill the first template section of a type with the given body."""
    return [(META.template_for(element_type)[0], body)]

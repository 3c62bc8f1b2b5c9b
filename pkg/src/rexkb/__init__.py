"""Operating-experience knowledge base: typed elements, validated links,
incremental text similarity, hybrid link suggestion and the fact workflow."""

from .engine import KnowledgeBase, MonotonicClock
from .errors import KnowledgeBaseError
from .kb_core import (
    AccessAction,
    Actor,
    ContentStatus,
    ElementType,
    KnowledgeElement,
    LinkType,
    MetaModel,
    OntologyItem,
    Role,
)
from .link_graph import Direction, FaitDossier, Link, LinkStatus
from .rex_flow import FaitLifecycle, FaitState, TransferMetrics
from .sim_index import SimilarityIndex, Tokenizer
from .suggester import Suggestion, SuggestionWeights

__all__ = [
    "AccessAction",
    "Actor",
    "ContentStatus",
    "Direction",
    "ElementType",
    "FaitDossier",
    "FaitLifecycle",
    "FaitState",
    "KnowledgeBase",
    "KnowledgeBaseError",
    "KnowledgeElement",
    "Link",
    "LinkStatus",
    "LinkType",
    "MetaModel",
    "MonotonicClock",
    "OntologyItem",
    "Role",
    "SimilarityIndex",
    "Suggestion",
    "SuggestionWeights",
    "Tokenizer",
    "TransferMetrics",
]

__version__ = "0.1.0"

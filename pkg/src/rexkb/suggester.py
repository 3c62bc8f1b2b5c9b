"""Hybrid link suggestion: text similarity blended with ontology-tag overlap
and a configurable per-triple prior, constrained by the meta-model schema.

score = w_text * cosine(element, target)
      + w_tag  * jaccard(ancestor-closed tags of element, of target)
      + w_prior * prior(source type, link type, target type)

Weights are renormalized to sum to one on entry, so output is invariant
under positive scaling. Only schema-allowed (target, link type) pairs are
ever emitted, and pairs already stored as Proposed or Validated links are
excluded. Suggestions with a zero total score carry no signal and are
dropped.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional

from .errors import InvalidRequest
from .kb_core import ElementType, LinkType, MetaModel, Ontology
from .link_graph import Direction, LinkGraph, LinkStatus
from .sim_index import SimilarityIndex


@dataclass(frozen=True)
class SuggestionWeights:
    text: float = 0.6
    tag: float = 0.3
    prior: float = 0.1

    def normalized(self) -> "SuggestionWeights":
        for name, value in (("text", self.text), ("tag", self.tag), ("prior", self.prior)):
            if value < 0:
                raise InvalidRequest(f"weight {name} must be non-negative, got {value}")
        total = self.text + self.tag + self.prior
        if total <= 0:
            raise InvalidRequest("at least one suggestion weight must be positive")
        return SuggestionWeights(self.text / total, self.tag / total, self.prior / total)


@dataclass(frozen=True)
class ScoreBreakdown:
    text_score: float
    tag_score: float
    type_prior: float


@dataclass(frozen=True)
class Suggestion:
    candidate_target: str
    link_type: LinkType
    score: float
    breakdown: ScoreBreakdown
    rank: int


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    """Jaccard similarity with the empty-vs-empty case pinned to 0."""
    if not a and not b:
        return 0.0
    union = len(a | b)
    return len(a & b) / union


def suggest_links(
    element_id: str,
    element_type: ElementType,
    element_tags: Iterable[str],
    *,
    meta: MetaModel,
    ontology: Ontology,
    graph: LinkGraph,
    index: SimilarityIndex,
    elements_of_type: Callable[[ElementType], Iterable[str]],
    tags_of: Callable[[str], Iterable[str]],
    k: int = 10,
    weights: Optional[SuggestionWeights] = None,
) -> list[Suggestion]:
    """Rank schema-allowed (target, link type) pairs for one element."""
    if k < 1:
        raise InvalidRequest(f"k must be >= 1, got {k}")
    w = (weights or SuggestionWeights()).normalized()

    text_scores: Mapping[str, float]
    if element_id in index:
        text_scores = {hit.doc_id: hit.score for hit in index.similar_to(element_id)}
    else:
        text_scores = {}
    element_closure = ontology.closure(element_tags)
    existing = {
        (link.target, link.link_type)
        for link in graph.links_of(
            element_id,
            Direction.OUT,
            statuses=(LinkStatus.PROPOSED, LinkStatus.VALIDATED),
        )
    }

    scored: list[tuple[float, str, str, Suggestion]] = []
    for link_type, target_type in meta.schema.outgoing(element_type):
        prior = meta.prior_for((element_type, link_type, target_type))
        for target_id in elements_of_type(target_type):
            if target_id == element_id or (target_id, link_type) in existing:
                continue
            text_score = text_scores.get(target_id, 0.0)
            tag_score = jaccard(element_closure, ontology.closure(tags_of(target_id)))
            score = w.text * text_score + w.tag * tag_score + w.prior * prior
            if score <= 0.0:
                continue
            scored.append(
                (
                    score,
                    target_id,
                    link_type.value,
                    Suggestion(
                        candidate_target=target_id,
                        link_type=link_type,
                        score=score,
                        breakdown=ScoreBreakdown(text_score, tag_score, prior),
                        rank=0,
                    ),
                )
            )

    scored.sort(key=lambda entry: (-entry[0], entry[1], entry[2]))
    return [
        Suggestion(
            candidate_target=s.candidate_target,
            link_type=s.link_type,
            score=s.score,
            breakdown=s.breakdown,
            rank=position,
        )
        for position, (_, _, _, s) in enumerate(scored[:k], start=1)
    ]

"""Technical-fact lifecycle and knowledge-transfer metrics.

A fact moves along a single path: Declared -> UnderAnalysis -> AvisIssued ->
Consolidated. The short loop ends when an advisory is issued back to the
operator; the long loop consolidates advisories into a pathology.

Transfer metrics are derived purely from the audit event log:

    transmission    dossier and element reads
    absorption_use  proposed links from a fact under analysis to an element
                    surfaced in the similar-events snapshot taken when its
                    analysis started
    enrichment      elements whose content became Validated plus links that
                    reached Validated status (decided or created validated)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Optional

from .errors import IllegalTransition


class FaitLifecycle(str, Enum):
    DECLARED = "Declared"
    UNDER_ANALYSIS = "UnderAnalysis"
    AVIS_ISSUED = "AvisIssued"
    CONSOLIDATED = "Consolidated"


#: The only legal transition edges.
NEXT_STATE = {
    FaitLifecycle.DECLARED: FaitLifecycle.UNDER_ANALYSIS,
    FaitLifecycle.UNDER_ANALYSIS: FaitLifecycle.AVIS_ISSUED,
    FaitLifecycle.AVIS_ISSUED: FaitLifecycle.CONSOLIDATED,
}


@dataclass(frozen=True)
class SimilarHit:
    """One nearest-past-event hit: the fact, its score, its validated advisories."""

    fait: str
    score: float
    advisories: tuple[str, ...]


@dataclass(frozen=True)
class HistoryEntry:
    state: FaitLifecycle
    actor: str
    timestamp: str
    metadata: Optional[Mapping[str, Any]] = None


@dataclass(frozen=True)
class FaitState:
    fait: str
    state: FaitLifecycle
    analyst: Optional[str] = None
    history: tuple[HistoryEntry, ...] = ()
    similar_snapshot: Optional[tuple[SimilarHit, ...]] = None

    def surfaced_ids(self) -> frozenset[str]:
        """Element ids surfaced by the stored similar-events snapshot."""
        if not self.similar_snapshot:
            return frozenset()
        out: set[str] = set()
        for hit in self.similar_snapshot:
            out.add(hit.fait)
            out.update(hit.advisories)
        return frozenset(out)


def check_transition(current: FaitLifecycle, new: FaitLifecycle) -> None:
    if NEXT_STATE.get(current) is not new:
        raise IllegalTransition(
            f"cannot move fact from {current.value} to {new.value}"
        )


@dataclass(frozen=True)
class TransferMetrics:
    transmission: int
    absorption_use: int
    enrichment: int


@dataclass(frozen=True)
class AuditEvent:
    """One committed operation; mutations and counted reads both appear."""

    seq: int
    timestamp: str
    actor: Optional[str]
    op: str
    ids: Mapping[str, Any] = field(default_factory=dict)
    extra: Mapping[str, Any] = field(default_factory=dict)


READ_OPS = frozenset({"read_element", "read_dossier"})


def compute_transfer_metrics(
    events: Iterable[AuditEvent],
    window_from: Optional[str] = None,
    window_to: Optional[str] = None,
) -> TransferMetrics:
    """Count transfer events inside an optional inclusive timestamp window."""
    transmission = 0
    absorption = 0
    enrichment = 0
    for event in events:
        if window_from is not None and event.timestamp < window_from:
            continue
        if window_to is not None and event.timestamp > window_to:
            continue
        if event.op in READ_OPS:
            transmission += 1
        if event.op == "propose_link" and event.extra.get("absorption"):
            absorption += 1
        if event.op == "validate_element":
            enrichment += 1
        enrichment += int(event.extra.get("validated_links", 0))
    return TransferMetrics(transmission, absorption, enrichment)

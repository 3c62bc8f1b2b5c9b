"""Incremental text-similarity index over element contents.

The index maintains raw term counts per document (a forward map plus an
inverted postings map) and derives TF-IDF weights at query time:

    tf(t, d)  = 1 + ln(count of t in d)
    idf(t)    = ln((1 + N) / (1 + df(t))) + 1
    w(t, d)   = tf(t, d) * idf(t)
    score     = cosine between the query's weight vector and the document's

Because idf depends on the live document count, document norms are computed
lazily and cached per index version; increments stay O(document terms) and
any interleaving of upserts and removals is observationally identical to a
batch rebuild of the net corpus.
"""
from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import DuplicateDocId, InvalidRequest, NotFound

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def fold(text: str) -> str:
    """Casefold and strip diacritics so e.g. "Métaux" and "metaux" unify."""
    decomposed = unicodedata.normalize("NFKD", text.casefold())
    return "".join(c for c in decomposed if unicodedata.category(c) != "Mn")


class Tokenizer:
    """Deterministic tokenizer: fold, split on non-alphanumerics, drop short
    tokens and configured stopwords."""

    MIN_TOKEN_LENGTH = 2

    def __init__(self, stopwords: Iterable[str] = ()):
        self._stopwords = frozenset(fold(w) for w in stopwords)

    @property
    def stopwords(self) -> frozenset[str]:
        return self._stopwords

    def tokenize(self, text: str) -> list[str]:
        return [
            token
            for token in _WORD_RE.findall(fold(text))
            if len(token) >= self.MIN_TOKEN_LENGTH and token not in self._stopwords
        ]


@dataclass(frozen=True)
class DocumentVector:
    """Materialized TF-IDF vector of one indexed document."""

    doc_id: str
    term_weights: dict[str, float]
    norm: float


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float


class SimilarityIndex:
    """Inverted index with insert/replace/remove and cosine-ranked queries."""

    def __init__(self, tokenizer: Tokenizer):
        self.tokenizer = tokenizer
        self._doc_terms: dict[str, dict[str, int]] = {}
        self._doc_kinds: dict[str, Optional[str]] = {}
        self._postings: dict[str, dict[str, int]] = {}
        self._version = 0
        self._norm_cache: dict[str, float] = {}
        self._norm_cache_version = -1

    # ------------------------------------------------------------------ state

    @property
    def doc_count(self) -> int:
        return len(self._doc_terms)

    @property
    def version(self) -> int:
        """Bumped on every mutation; norm caches key off it."""
        return self._version

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._doc_terms

    def doc_ids(self) -> list[str]:
        return list(self._doc_terms)

    def terms(self) -> list[str]:
        return list(self._postings)

    def document_frequency(self, term: str) -> int:
        return len(self._postings.get(term, ()))

    def postings(self, term: str) -> dict[str, int]:
        return dict(self._postings.get(term, ()))

    def kind_of(self, doc_id: str) -> Optional[str]:
        return self._doc_kinds.get(doc_id)

    def term_counts(self, doc_id: str) -> dict[str, int]:
        try:
            return dict(self._doc_terms[doc_id])
        except KeyError:
            raise NotFound(f"document {doc_id!r} not indexed")

    # -------------------------------------------------------------- mutation

    def upsert(self, doc_id: str, text: str, kind: Optional[str] = None) -> None:
        """Insert or fully replace one document; usable immediately."""
        counts = Counter(self.tokenizer.tokenize(text))
        if doc_id in self._doc_terms:
            self._retract(doc_id)
        self._doc_terms[doc_id] = dict(counts)
        self._doc_kinds[doc_id] = kind
        for term, count in counts.items():
            self._postings.setdefault(term, {})[doc_id] = count
        self._version += 1

    def remove(self, doc_id: str) -> None:
        if doc_id not in self._doc_terms:
            raise NotFound(f"document {doc_id!r} not indexed")
        self._retract(doc_id)
        del self._doc_terms[doc_id]
        del self._doc_kinds[doc_id]
        self._version += 1

    def discard(self, doc_id: str) -> None:
        """Remove if present; used by transactional undo paths."""
        if doc_id in self._doc_terms:
            self.remove(doc_id)

    def restore_doc(
        self, doc_id: str, counts: dict[str, int], kind: Optional[str] = None
    ) -> None:
        """Trusted snapshot-load path: install pre-tokenized term counts."""
        if doc_id in self._doc_terms:
            self._retract(doc_id)
        self._doc_terms[doc_id] = dict(counts)
        self._doc_kinds[doc_id] = kind
        for term, count in counts.items():
            self._postings.setdefault(term, {})[doc_id] = count
        self._version += 1

    def _retract(self, doc_id: str) -> None:
        for term in self._doc_terms[doc_id]:
            bucket = self._postings[term]
            del bucket[doc_id]
            if not bucket:
                del self._postings[term]

    @classmethod
    def rebuild(
        cls, tokenizer: Tokenizer, corpus: Iterable[Sequence]
    ) -> "SimilarityIndex":
        """Batch construction from (doc_id, text[, kind]) records."""
        index = cls(tokenizer)
        for record in corpus:
            if len(record) == 2:
                doc_id, text = record
                kind = None
            else:
                doc_id, text, kind = record
            if doc_id in index:
                raise DuplicateDocId(f"duplicate doc id {doc_id!r} in corpus")
            index.upsert(doc_id, text, kind)
        return index

    # --------------------------------------------------------------- queries

    def _idf(self, term: str) -> float:
        df = len(self._postings.get(term, ()))
        return math.log((1 + len(self._doc_terms)) / (1 + df)) + 1.0

    def _weights(self, counts: dict[str, int]) -> dict[str, float]:
        return {
            term: (1.0 + math.log(count)) * self._idf(term)
            for term, count in counts.items()
        }

    def _norm(self, doc_id: str) -> float:
        if self._norm_cache_version != self._version:
            self._norm_cache.clear()
            self._norm_cache_version = self._version
        norm = self._norm_cache.get(doc_id)
        if norm is None:
            norm = math.sqrt(
                sum(w * w for w in self._weights(self._doc_terms[doc_id]).values())
            )
            self._norm_cache[doc_id] = norm
        return norm

    def warm_norms(self) -> None:
        """Precompute all document norms (bulk-load finalization)."""
        for doc_id in self._doc_terms:
            self._norm(doc_id)

    def vector(self, doc_id: str) -> DocumentVector:
        weights = self._weights(self.term_counts(doc_id))
        return DocumentVector(
            doc_id=doc_id,
            term_weights=weights,
            norm=math.sqrt(sum(w * w for w in weights.values())),
        )

    def _ranked(
        self,
        query_counts: dict[str, int],
        kinds: Optional[frozenset[str]],
        exclude: Optional[str],
    ) -> list[SearchHit]:
        if not query_counts:
            return []
        query_weights = self._weights(query_counts)
        query_norm = math.sqrt(sum(w * w for w in query_weights.values()))
        if query_norm == 0.0:
            return []
        dots: dict[str, float] = {}
        for term in query_counts:
            query_weight = query_weights[term]
            idf = self._idf(term)
            for doc_id, count in self._postings.get(term, {}).items():
                doc_weight = (1.0 + math.log(count)) * idf
                dots[doc_id] = dots.get(doc_id, 0.0) + query_weight * doc_weight
        hits = []
        for doc_id, dot in dots.items():
            if doc_id == exclude:
                continue
            if kinds is not None and self._doc_kinds.get(doc_id) not in kinds:
                continue
            score = dot / (query_norm * self._norm(doc_id))
            if score > 0.0:
                hits.append(SearchHit(doc_id, score))
        hits.sort(key=lambda h: (-h.score, h.doc_id))
        return hits

    def query(
        self,
        query_text: str,
        k: int = 10,
        kinds: Optional[Iterable[str]] = None,
    ) -> list[SearchHit]:
        """Top-k cosine matches; descending score, ties by ascending doc id;
        documents sharing no query term are omitted."""
        if k < 1:
            raise InvalidRequest(f"k must be >= 1, got {k}")
        kind_filter = frozenset(kinds) if kinds is not None else None
        counts = dict(Counter(self.tokenizer.tokenize(query_text)))
        return self._ranked(counts, kind_filter, exclude=None)[:k]

    def similar_to(
        self,
        doc_id: str,
        kinds: Optional[Iterable[str]] = None,
        k: Optional[int] = None,
    ) -> list[SearchHit]:
        """All documents with positive cosine against an indexed document,
        the document itself excluded. Scores equal ``query`` on its own text."""
        counts = self._doc_terms.get(doc_id)
        if counts is None:
            raise NotFound(f"document {doc_id!r} not indexed")
        kind_filter = frozenset(kinds) if kinds is not None else None
        hits = self._ranked(counts, kind_filter, exclude=doc_id)
        return hits if k is None else hits[:k]

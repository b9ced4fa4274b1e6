"""Instance, ranking, and text-representation primitives.

Everything in here is immutable after construction and safe to share
across workers; all functions are pure.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class RankExplainError(Exception):
    """Base class for errors raised by this package."""


class InvalidScoreError(RankExplainError):
    """A ranker produced a non-finite score."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric codepoint."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Bijective term <-> dense-index map."""

    index: dict[str, int]
    terms: tuple[str, ...]

    @classmethod
    def build(cls, texts) -> "Vocabulary":
        """Vocabulary over all tokens of `texts`, indices in sorted term order."""
        terms = sorted({tok for text in texts for tok in tokenize(text)})
        return cls(index={t: i for i, t in enumerate(terms)}, terms=tuple(terms))

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index


def to_bow(tokens: list[str], vocab: Vocabulary) -> dict[int, int]:
    """Sparse count vector of in-vocabulary tokens; OOV tokens are dropped."""
    counts: dict[int, int] = {}
    for tok in tokens:
        idx = vocab.index.get(tok)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    return counts


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    bow: dict[int, int]

    @classmethod
    def from_text(cls, doc_id: str, text: str, vocab: Vocabulary) -> "Document":
        return cls(id=doc_id, text=text, bow=to_bow(tokenize(text), vocab))

    @property
    def length(self) -> int:
        """Token count of the in-vocabulary portion of the document."""
        return sum(self.bow.values())


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    bow: dict[int, int]

    @classmethod
    def from_text(cls, query_id: str, text: str, vocab: Vocabulary) -> "Query":
        return cls(id=query_id, text=text, bow=to_bow(tokenize(text), vocab))


@dataclass(frozen=True)
class Instance:
    """One query plus its candidate documents; the unit of explanation."""

    query: Query
    documents: tuple[Document, ...]
    vocab: Vocabulary

    def __post_init__(self):
        if len(self.documents) < 1:
            raise ValueError("an instance needs at least one document")
        ids = [d.id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate document ids in instance {self.query.id!r}")

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    @classmethod
    def from_texts(cls, query_id: str, query_text: str, docs: list[tuple[str, str]],
                   vocab: Vocabulary | None = None) -> "Instance":
        """Build an instance from raw strings; `docs` is a list of (id, text)."""
        if vocab is None:
            vocab = Vocabulary.build([query_text] + [t for _, t in docs])
        query = Query.from_text(query_id, query_text, vocab)
        documents = tuple(Document.from_text(d, t, vocab) for d, t in docs)
        return cls(query=query, documents=documents, vocab=vocab)


@dataclass(frozen=True)
class Ranking:
    """Permutation of document indices (best first) with index-aligned scores."""

    ordering: tuple[int, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if sorted(self.ordering) != list(range(len(self.scores))):
            raise ValueError("ordering is not a permutation of the score indices")

    def position_of(self, doc_index: int) -> int:
        """0-based rank position of a document (0 = best)."""
        return self.ordering.index(doc_index)


def rank_from_scores(scores) -> Ranking:
    """Ranking by descending score; ties broken by ascending document index."""
    scores = [float(s) for s in scores]
    if not scores:
        raise ValueError("cannot rank an empty score list")
    for i, s in enumerate(scores):
        if not math.isfinite(s):
            raise InvalidScoreError(f"non-finite score {s!r} at document index {i}")
    ordering = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return Ranking(ordering=tuple(ordering), scores=tuple(scores))


def min_max_normalize(values) -> list[float]:
    """Map values affinely onto [0, 1]; all-equal input maps to all ones."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("cannot normalize an empty list")
    lo, hi = min(values), max(values)
    if hi == lo:
        return [1.0] * len(values)
    span = hi - lo
    return [(v - lo) / span for v in values]

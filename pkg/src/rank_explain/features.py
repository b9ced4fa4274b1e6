"""Explanation feature spaces and the instance -> feature-matrix mapping.

Two spaces are supported: the words of the instance (query + documents),
and a fixed catalog of 18 text-computable relevance features. The mapping
from an instance to its per-document feature matrix is deterministic, so
perturbed instances can always be re-encoded consistently.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass

import numpy as np

from .core import Document, Instance, Query
from .rankers import DEFAULT_B, DEFAULT_K1, CorpusStats, bm25_score

ENGINEERED_CATALOG = (
    "covered_query_term_number",
    "covered_query_term_ratio",
    "stream_length",
    "idf_sum",
    "tf_sum",
    "tf_min",
    "tf_max",
    "tf_mean",
    "tf_median",
    "norm_tf_sum",
    "norm_tf_min",
    "norm_tf_max",
    "norm_tf_mean",
    "tfidf_sum",
    "tfidf_min",
    "tfidf_max",
    "tfidf_mean",
    "bm25",
)

WORD_SPACE = "words"
ENGINEERED_SPACE = "engineered"


@dataclass(frozen=True)
class FeatureSpace:
    """An ordered explanation feature set with dense ids 0..M-1."""

    kind: str
    names: tuple[str, ...]
    # WordSpace: instance-vocabulary index of each feature's term.
    vocab_indices: tuple[int, ...] = ()
    # EngineeredSpace: catalog slot of each feature (allows restriction).
    catalog_indices: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return len(self.names)

    def restrict(self, feature_ids) -> "FeatureSpace":
        """Sub-space keeping only the given feature ids (in the given order)."""
        ids = list(feature_ids)
        return FeatureSpace(
            kind=self.kind,
            names=tuple(self.names[i] for i in ids),
            vocab_indices=tuple(self.vocab_indices[i] for i in ids) if self.vocab_indices else (),
            catalog_indices=tuple(self.catalog_indices[i] for i in ids) if self.catalog_indices else (),
        )


def build_feature_space(instance: Instance, kind: str,
                        stats: CorpusStats | None = None) -> FeatureSpace:
    """Explanation space for one instance.

    WordSpace is exactly the union of query and document terms, sorted
    lexicographically; EngineeredSpace is the fixed 18-feature catalog.
    """
    if kind == WORD_SPACE:
        term_ids = set(instance.query.bow)
        for doc in instance.documents:
            term_ids.update(doc.bow)
        terms = sorted(instance.vocab.terms[i] for i in term_ids)
        return FeatureSpace(
            kind=WORD_SPACE,
            names=tuple(terms),
            vocab_indices=tuple(instance.vocab.index[t] for t in terms),
        )
    if kind == ENGINEERED_SPACE:
        return FeatureSpace(
            kind=ENGINEERED_SPACE,
            names=ENGINEERED_CATALOG,
            catalog_indices=tuple(range(len(ENGINEERED_CATALOG))),
        )
    raise ValueError(f"unknown feature space kind {kind!r}")


def compute_engineered(query: Query, doc: Document, stats: CorpusStats,
                       k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> np.ndarray:
    """The full 18-feature catalog for one query-document pair.

    tf statistics run over the distinct query terms (0 for absent terms);
    length-normalized statistics divide by the document token count.
    """
    q_terms = sorted(query.bow)
    if not q_terms:
        raise ValueError("cannot compute engineered features for an empty query")
    stream_length = float(sum(doc.bow.values()))
    tf = [float(doc.bow.get(t, 0)) for t in q_terms]
    idf = [stats.idf(t) for t in q_terms]
    tfidf = [f * i for f, i in zip(tf, idf)]
    covered = float(sum(1 for f in tf if f > 0))
    inv_len = 1.0 / stream_length if stream_length > 0 else 0.0

    def spread(values):
        return (sum(values), min(values), max(values), sum(values) / len(values))

    tf_stats = spread(tf)
    norm_stats = tuple(v * inv_len for v in spread(tf))
    tfidf_stats = spread(tfidf)
    return np.array([
        covered,
        covered / len(q_terms),
        stream_length,
        sum(idf),
        *tf_stats,
        statistics.median(tf),
        *norm_stats,
        *tfidf_stats,
        bm25_score(query, doc, stats, k1, b),
    ])


def feature_matrix(instance: Instance, space: FeatureSpace,
                   stats: CorpusStats | None = None) -> np.ndarray:
    """N_docs x M matrix: row d holds document d's explanation-feature values."""
    if space.kind == WORD_SPACE:
        rows = np.zeros((instance.n_docs, space.size))
        for d, doc in enumerate(instance.documents):
            for j, v in enumerate(space.vocab_indices):
                rows[d, j] = doc.bow.get(v, 0)
        return rows
    if stats is None:
        raise ValueError("engineered features need corpus stats")
    full = np.vstack([compute_engineered(instance.query, doc, stats)
                      for doc in instance.documents])
    return full[:, list(space.catalog_indices)]


def tabular_views(instance: Instance, space: FeatureSpace, ranker,
                  stats: CorpusStats | None = None) -> tuple[np.ndarray, list[int]]:
    """Input matrix for a tabular ranker plus each explanation feature's column.

    A ranker trained on the full engineered catalog keeps receiving all its
    input columns even when the explanation space is a restricted subset;
    the returned column map locates every explanation feature inside the
    ranker's matrix.
    """
    n_inputs = getattr(ranker, "n_inputs", None)
    if n_inputs is None or n_inputs == space.size:
        return feature_matrix(instance, space, stats), list(range(space.size))
    if space.kind != ENGINEERED_SPACE or n_inputs != len(ENGINEERED_CATALOG):
        raise ValueError(
            f"ranker expects {n_inputs} input features but the explanation "
            f"space provides {space.size}")
    full_space = build_feature_space(instance, ENGINEERED_SPACE, stats)
    return feature_matrix(instance, full_space, stats), list(space.catalog_indices)


def query_vector(instance: Instance, space: FeatureSpace) -> np.ndarray:
    """The query's representation used for kernel distances.

    In WordSpace this is the query's term-count vector over the space; the
    engineered catalog has no per-query vector, so the query falls back to
    its word counts over the full instance vocabulary.
    """
    if space.kind == WORD_SPACE:
        return np.array([float(instance.query.bow.get(v, 0)) for v in space.vocab_indices])
    return word_count_vector(instance.query.bow, len(instance.vocab))


def word_count_vector(bow: dict[int, int], width: int) -> np.ndarray:
    out = np.zeros(width)
    for idx, count in bow.items():
        out[idx] = count
    return out

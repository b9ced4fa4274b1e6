"""Competing explanation systems.

Pointwise LIME-style explanations under the three classic relevance
transforms, averaged/weighted aggregation across documents, a random
control, and greedy/exhaustive validity+completeness feature selection
with uniform weights.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import Document, Instance, Ranking, rank_from_scores
from .evaluation import kendall_tau, score_original
from .explain import Explanation, cosine_distance, normalize_for_display, sparsify
from .features import WORD_SPACE, FeatureSpace, feature_matrix, tabular_views
from .perturb import SimplifiedInput, apply_circuitous, apply_direct, rebuild_text
from .rankers import CorpusStats

TOP_K_BINARY = "topk-binary"
SCORE_BASED = "score"
RANK_BASED = "rank"

SYSTEM_RANDOM = "random"
SYSTEM_AVERAGED_EXS = "averaged-exs"
SYSTEM_WEIGHTED_EXS = "weighted-exs"
SYSTEM_TOPK = "topk"


@dataclass(frozen=True)
class RelevanceTransform:
    """Maps a perturbed document's score to a pointwise relevance in [0, 1]."""

    kind: str = SCORE_BASED
    k: int = 10

    def __post_init__(self):
        if self.kind not in (TOP_K_BINARY, SCORE_BASED, RANK_BASED):
            raise ValueError(f"unknown relevance transform {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be at least 1")


def exs_relevance(transform: RelevanceTransform, perturbed_score: float,
                  original: Ranking) -> float:
    """Relevance of a perturbed document judged against the original top-k."""
    k = min(transform.k, len(original.ordering))
    top_scores = [original.scores[d] for d in original.ordering[:k]]
    if transform.kind == TOP_K_BINARY:
        return 1.0 if perturbed_score > top_scores[-1] else 0.0
    if transform.kind == SCORE_BASED:
        best = top_scores[0]
        if best <= 0.0:
            raise ValueError(
                "score-based relevance needs a positive top score; "
                "use a non-negative-score ranker or another transform")
        if perturbed_score >= best:
            return 1.0
        return float(np.clip(1.0 - (best - perturbed_score) / best, 0.0, 1.0))
    if perturbed_score <= top_scores[-1]:
        return 0.0
    rank = 1 + sum(1 for s in top_scores if s > perturbed_score)
    return 1.0 - rank / k


def _binary_masks(m: int, n_samples: int, rng) -> np.ndarray:
    """All-ones anchor plus random binary retention vectors."""
    z = np.ones((n_samples, m))
    for row in range(1, n_samples):
        size = int(rng.integers(1, m + 1))
        masked = rng.choice(m, size=size, replace=False)
        z[row, masked] = 0.0
    return z


def _perturb_single_doc(instance: Instance, doc_index: int, z_row: np.ndarray,
                        space: FeatureSpace, base_matrix: np.ndarray,
                        ranker_views, stats) -> tuple:
    """One pointwise perturbation of a single document.

    Returns (perturbed instance or None, ranker matrix or None, the
    document's perturbed explanation-feature row).
    """
    if space.kind == WORD_SPACE:
        doc = instance.documents[doc_index]
        drop = {v for v, keep in zip(space.vocab_indices, z_row) if keep == 0.0}
        new_bow = {t: c for t, c in doc.bow.items() if t not in drop}
        if new_bow == doc.bow:
            new_doc = doc
        else:
            text = rebuild_text(doc.text, instance.vocab,
                                {t: new_bow.get(t, 0) for t in doc.bow})
            new_doc = Document.from_text(doc.id, text, instance.vocab)
        docs = list(instance.documents)
        docs[doc_index] = new_doc
        perturbed = Instance(query=instance.query, documents=tuple(docs),
                             vocab=instance.vocab)
        row = np.array([float(new_doc.bow.get(v, 0)) for v in space.vocab_indices])
        return perturbed, None, row
    if ranker_views is not None:
        ranker_base, col_map = ranker_views
        full = ranker_base.copy()
        masked_cols = [col_map[j] for j in range(space.size) if z_row[j] == 0.0]
        full[doc_index, masked_cols] = 0.0
        return None, full, full[doc_index, col_map]
    targets = np.zeros((instance.n_docs, space.size))
    targets[doc_index] = -base_matrix[doc_index] * (1.0 - z_row)
    perturbed, matrix = apply_circuitous(instance, space, targets, stats)
    return perturbed, matrix, matrix[doc_index]


def exs_pointwise_explain(instance: Instance, doc_index: int, ranker,
                          transform: RelevanceTransform, space: FeatureSpace,
                          samples_per_doc: int | None = None, seed: int = 0,
                          stats: CorpusStats | None = None, sigma: float = 0.25,
                          ridge: float = 1.0) -> np.ndarray:
    """Classic LIME on one document's relevance under the chosen transform.

    Binary masks on the document's own features, squared error weighted by
    an exponential kernel on the document's cosine distance, solved in
    closed form with a small ridge.
    """
    m = space.size
    n_samples = samples_per_doc if samples_per_doc is not None else 5 * m
    rng = np.random.default_rng(seed)
    base_matrix = feature_matrix(instance, space, stats)
    tabular = getattr(ranker, "input_kind", "text") == "tabular"
    ranker_views = tabular_views(instance, space, ranker, stats) if tabular else None
    original = rank_from_scores(score_original(ranker, instance, space, stats))

    z = _binary_masks(m, n_samples, rng)
    y = np.empty(n_samples)
    pi = np.empty(n_samples)
    base_row = base_matrix[doc_index]
    for i in range(n_samples):
        perturbed, matrix, row = _perturb_single_doc(
            instance, doc_index, z[i], space, base_matrix, ranker_views, stats)
        if matrix is not None and perturbed is None:
            scores = np.asarray(ranker.score_matrix(matrix), dtype=float)
        else:
            scores = np.asarray(ranker.score_instance(perturbed), dtype=float)
        y[i] = exs_relevance(transform, float(scores[doc_index]), original)
        dist = cosine_distance(base_row, row)
        pi[i] = np.exp(-(dist ** 2) / sigma ** 2)

    # Weighted ridge with an unpenalized intercept, solved in closed form.
    design = np.hstack([z, np.ones((n_samples, 1))])
    wd = design * pi[:, None]
    gram = design.T @ wd
    penalty = ridge * np.eye(m + 1)
    penalty[m, m] = 0.0
    beta = np.linalg.solve(gram + penalty, wd.T @ y)
    return beta[:m]


def aggregate_exs(per_doc_weights, mode: str, original: Ranking, k: int = 8,
                  weight_mode: str = "score") -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Combine per-document pointwise weights into one sparse attribution.

    `mode` is "averaged" (plain mean) or "weighted" (mean weighted by each
    document's margin over the lowest-ranked one, by score or by rank).
    Returns (feature_ids, display_weights) with |weights| summing to one.
    """
    stacked = np.vstack(per_doc_weights)
    if mode == "averaged":
        combined = stacked.mean(axis=0)
    elif mode == "weighted":
        if weight_mode == "score":
            margins = np.asarray(original.scores) - min(original.scores)
        elif weight_mode == "rank":
            n = len(original.ordering)
            positions = np.empty(n)
            for rank, doc in enumerate(original.ordering):
                positions[doc] = rank
            margins = (n - 1) - positions
        else:
            raise ValueError(f"unknown weight mode {weight_mode!r}")
        total = margins.sum()
        if total == 0.0:
            combined = stacked.mean(axis=0)
        else:
            combined = margins @ stacked / total
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    ids, raw = sparsify(combined, k)
    if not ids:
        return (), ()
    return ids, normalize_for_display(raw)


def exs_explain(instance: Instance, ranker, space: FeatureSpace, mode: str,
                transform: RelevanceTransform | None = None,
                stats: CorpusStats | None = None, k: int = 8, seed: int = 0,
                samples_per_doc: int | None = None,
                weight_mode: str = "score") -> Explanation:
    """Full pointwise baseline: per-document LIME then aggregation."""
    transform = transform or RelevanceTransform()
    original = rank_from_scores(score_original(ranker, instance, space, stats))
    per_doc = [
        exs_pointwise_explain(instance, d, ranker, transform, space,
                              samples_per_doc=samples_per_doc,
                              seed=seed + 1000 * d, stats=stats)
        for d in range(instance.n_docs)
    ]
    ids, display = aggregate_exs(per_doc, mode, original, k, weight_mode)
    system = SYSTEM_AVERAGED_EXS if mode == "averaged" else SYSTEM_WEIGHTED_EXS
    return Explanation(
        instance_id=instance.query.id, system=system,
        feature_ids=ids, feature_names=tuple(space.names[i] for i in ids),
        raw_weights=display, display_weights=display,
        training_fidelity=None)


def random_explanation(space: FeatureSpace, k: int, seed: int,
                       instance_id: str = "") -> Explanation:
    """Uniformly random features with random positive weights summing to one."""
    if k > space.size:
        raise ValueError(f"cannot pick {k} of {space.size} features")
    rng = np.random.default_rng(seed)
    ids = sorted(int(i) for i in rng.choice(space.size, size=k, replace=False))
    weights = rng.uniform(0.0, 1.0, size=k)
    weights = weights / weights.sum()
    order = sorted(range(k), key=lambda i: (-weights[i], ids[i]))
    ids = tuple(ids[i] for i in order)
    weights = tuple(float(weights[i]) for i in order)
    return Explanation(
        instance_id=instance_id, system=SYSTEM_RANDOM,
        feature_ids=ids, feature_names=tuple(space.names[i] for i in ids),
        raw_weights=weights, display_weights=weights,
        training_fidelity=None)


def _masked_ranking(instance: Instance, ranker, space: FeatureSpace,
                    keep: set[int], ranker_views,
                    stats: CorpusStats | None) -> Ranking:
    """Ranking produced when every feature outside `keep` is masked."""
    if ranker_views is not None:
        ranker_base, col_map = ranker_views
        matrix = ranker_base.copy()
        masked_cols = [col_map[j] for j in range(space.size) if j not in keep]
        matrix[:, masked_cols] = 0.0
        return rank_from_scores(ranker.score_matrix(matrix))
    z = np.array([1.0 if j in keep else 0.0 for j in range(space.size)])
    perturbed = apply_direct(instance, space, SimplifiedInput(values=tuple(z)))
    return rank_from_scores(ranker.score_instance(perturbed))


def topk_features_greedy(instance: Instance, ranker, space: FeatureSpace,
                         k: int = 8, mode: str = "greedy",
                         stats: CorpusStats | None = None) -> Explanation:
    """Select features maximizing validity + completeness; uniform weights.

    validity(S) is the rank correlation of the ranking produced with only S
    retained against the original; completeness(S) is minus the correlation
    of the ranking produced with S removed.
    """
    m = space.size
    tabular = getattr(ranker, "input_kind", "text") == "tabular"
    ranker_views = tabular_views(instance, space, ranker, stats) if tabular else None
    original = rank_from_scores(score_original(ranker, instance, space, stats))

    def validity(keep: set[int]) -> float:
        return kendall_tau(original, _masked_ranking(
            instance, ranker, space, keep, ranker_views, stats))

    def objective(subset: set[int]) -> float:
        complement = set(range(m)) - subset
        return validity(subset) - kendall_tau(original, _masked_ranking(
            instance, ranker, space, complement, ranker_views, stats))

    if mode == "exhaustive":
        if m > 20:
            raise ValueError("exhaustive selection is limited to 20 features; "
                             "use greedy mode")
        best = None
        for size in range(1, min(k, m) + 1):
            for combo in itertools.combinations(range(m), size):
                value = objective(set(combo))
                if best is None or value > best[0] + 1e-12 or (
                        abs(value - best[0]) <= 1e-12 and combo < best[1]):
                    best = (value, combo)
        chosen = best[1]
    elif mode == "greedy":
        subset: list[int] = []
        best_prefix: tuple[float, tuple[int, ...]] | None = None
        for _ in range(min(k, m)):
            step_best = None
            for f in range(m):
                if f in subset:
                    continue
                value = objective(set(subset) | {f})
                if step_best is None or value > step_best[0] + 1e-12:
                    step_best = (value, f)
            if step_best is None:
                break
            subset.append(step_best[1])
            if best_prefix is None or step_best[0] > best_prefix[0] + 1e-12:
                best_prefix = (step_best[0], tuple(subset))
        chosen = best_prefix[1] if best_prefix else ()
    else:
        raise ValueError(f"unknown selection mode {mode!r}")

    chosen = tuple(sorted(chosen))
    weight = 1.0 / len(chosen) if chosen else 0.0
    weights = (weight,) * len(chosen)
    return Explanation(
        instance_id=instance.query.id, system=SYSTEM_TOPK,
        feature_ids=chosen, feature_names=tuple(space.names[i] for i in chosen),
        raw_weights=weights, display_weights=weights,
        training_fidelity=None)

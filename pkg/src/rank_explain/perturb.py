"""Perturbation neighborhood generation around an instance.

Covers covariance estimation over explanation features, correlated normal
sampling, single/group mask construction, direct perturbations (word
masking/scaling and tabular column edits) and circuitous perturbations
(greedy word edits steering engineered features toward a target).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Document, Instance, Query, RankExplainError, tokenize
from .features import (
    ENGINEERED_SPACE,
    WORD_SPACE,
    FeatureSpace,
    compute_engineered,
    feature_matrix,
    query_vector,
    tabular_views,
)
from .rankers import CorpusStats

PSD_JITTER = 1e-9

SINGLE = "single"
GROUP = "group"
MASK = "mask"
VALUE_DELTA = "value"


class PerturbationError(RankExplainError):
    """A perturbation sample could not be generated or scored."""


class CovarianceFactorizationError(RankExplainError):
    pass


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma_c: np.ndarray
    mean: np.ndarray
    sample_count: int
    degenerate: bool = False  # single-sample estimate, covariance forced to zero


@dataclass(frozen=True)
class PerturbationPlan:
    mode: str = GROUP
    style: str = MASK
    count: int | None = None  # defaults to 5 * M at generation time
    rng_seed: int = 0
    group_size_range: tuple[int, int] | None = None  # defaults to (2, max(2, M // 4))

    def __post_init__(self):
        if self.mode not in (SINGLE, GROUP):
            raise ValueError(f"unknown perturbation mode {self.mode!r}")
        if self.style not in (MASK, VALUE_DELTA):
            raise ValueError(f"unknown perturbation style {self.style!r}")
        if self.count is not None and self.count < 1:
            raise ValueError("perturbation count must be at least 1")

    def resolved_count(self, m: int) -> int:
        return self.count if self.count is not None else 5 * m


@dataclass(frozen=True)
class SimplifiedInput:
    """Explanation-space encoding of a perturbation.

    WordSpace: per-term retained fraction in [0, 2] (1 = untouched).
    EngineeredSpace: achieved per-feature delta from the original instance
    (averaged over documents when documents moved by different amounts).
    """

    values: tuple[float, ...]

    @classmethod
    def identity(cls, space: FeatureSpace) -> "SimplifiedInput":
        fill = 1.0 if space.kind == WORD_SPACE else 0.0
        return cls(values=(fill,) * space.size)


@dataclass
class PerturbedSample:
    index: int
    simplified: SimplifiedInput
    matrix: np.ndarray               # explanation feature matrix of the perturbed input
    f_scores: np.ndarray             # black-box scores, index-aligned to documents
    instance: Instance | None = None  # perturbed instance when the ranker input is text
    query_rep: np.ndarray | None = None
    kernel_weight: float = 1.0       # filled in by the explainer


def estimate_covariance(samples) -> CovarianceEstimate:
    """Unbiased sample covariance (divisor n - 1) of the rows of `samples`."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    n, m = x.shape
    if m == 0:
        raise ValueError("cannot estimate covariance over zero features")
    mean = x.mean(axis=0)
    if n == 1:
        return CovarianceEstimate(sigma_c=np.zeros((m, m)), mean=mean,
                                  sample_count=1, degenerate=True)
    centered = x - mean
    sigma = centered.T @ centered / (n - 1)
    return CovarianceEstimate(sigma_c=sigma, mean=mean, sample_count=n)


def sample_correlated(cov: CovarianceEstimate, count: int, seed: int) -> np.ndarray:
    """Zero-mean multivariate normal draws with covariance sigma_c."""
    sigma = cov.sigma_c
    m = sigma.shape[0]
    if not np.any(sigma):
        return np.zeros((count, m))
    try:
        chol = np.linalg.cholesky(sigma + PSD_JITTER * np.eye(m))
    except np.linalg.LinAlgError as e:
        raise CovarianceFactorizationError(
            f"covariance not factorizable even after {PSD_JITTER} jitter") from e
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, m))
    return z @ chol.T


def make_masks(m: int, plan: PerturbationPlan, seed: int) -> list[tuple[int, ...]]:
    """Feature index sets to perturb, one per sample.

    Both modes start with every singleton. Single mode then repeats
    uniform-random singletons; group mode draws random subsets with sizes
    uniform in the plan's range, avoiding duplicates while distinct subsets
    remain available.
    """
    if m < 1:
        raise ValueError("need at least one feature")
    count = plan.resolved_count(m)
    rng = np.random.default_rng(seed)
    masks: list[tuple[int, ...]] = [(i,) for i in range(min(m, count))]
    if plan.mode == SINGLE:
        while len(masks) < count:
            masks.append((int(rng.integers(m)),))
        return masks

    lo, hi = plan.group_size_range or (2, max(2, m // 4))
    lo = max(1, min(lo, m))
    hi = max(lo, min(hi, m))
    seen = set(masks)
    misses = 0
    while len(masks) < count:
        size = int(rng.integers(lo, hi + 1))
        subset = tuple(sorted(rng.choice(m, size=size, replace=False).tolist()))
        if subset in seen and misses < 50 * count:
            misses += 1
            continue
        seen.add(subset)
        masks.append(subset)
    return masks


def rebuild_text(text: str, vocab, new_counts: dict[int, int]) -> str:
    """Rewrite text so its token counts match `new_counts` for the given terms.

    Keeps original token order, dropping excess occurrences and appending
    extra copies at the end for raised counts. Tokens not mentioned in
    `new_counts` pass through untouched.
    """
    kept = []
    seen: dict[int, int] = {}
    for tok in tokenize(text):
        idx = vocab.index.get(tok)
        if idx is None or idx not in new_counts:
            kept.append(tok)
            continue
        if seen.get(idx, 0) < new_counts[idx]:
            kept.append(tok)
        seen[idx] = seen.get(idx, 0) + 1
    for idx in sorted(new_counts):
        extra = new_counts[idx] - seen.get(idx, 0)
        if extra > 0:
            kept.extend([vocab.terms[idx]] * extra)
    return " ".join(kept)


def _scale_bow_text(text: str, bow: dict[int, int], vocab,
                    factors: dict[int, float]) -> str | None:
    """New text for one query/document under per-term retained fractions.

    Returns None when nothing changes.
    """
    new_counts: dict[int, int] = {}
    for idx, factor in factors.items():
        old = bow.get(idx, 0)
        if old == 0:
            continue
        new = max(int(round(old * factor)), 0)
        if new != old:
            new_counts[idx] = new
    if not new_counts:
        return None
    return rebuild_text(text, vocab, new_counts)


def apply_direct(instance: Instance, space: FeatureSpace,
                 simplified: SimplifiedInput) -> Instance:
    """Scale every occurrence count of each space term by its retained fraction.

    A fraction of 0 deletes the term from the query and every document; 1
    leaves it untouched; intermediate values round half-to-even.
    """
    if space.kind != WORD_SPACE:
        raise ValueError("direct perturbations apply to word spaces")
    factors = {v: f for v, f in zip(space.vocab_indices, simplified.values) if f != 1.0}
    if not factors:
        return instance
    vocab = instance.vocab
    new_q = instance.query
    q_text = _scale_bow_text(instance.query.text, instance.query.bow, vocab, factors)
    if q_text is not None:
        new_q = Query.from_text(instance.query.id, q_text, vocab)
    new_docs = []
    for doc in instance.documents:
        d_text = _scale_bow_text(doc.text, doc.bow, vocab, factors)
        new_docs.append(doc if d_text is None else Document.from_text(doc.id, d_text, vocab))
    return Instance(query=new_q, documents=tuple(new_docs), vocab=vocab)


def _doc_engineered(query: Query, bow: dict[int, int], stats: CorpusStats,
                    catalog_indices) -> np.ndarray:
    probe = Document(id="", text="", bow=bow)
    return compute_engineered(query, probe, stats)[list(catalog_indices)]


def _edit_candidates(bow: dict[int, int], query_terms: set[int]):
    """Single word edits: (term, count change). Deterministic order."""
    in_doc = sorted(bow)
    for t in in_doc:
        if t in query_terms:
            yield t, -1
            yield t, +1
    for t in in_doc:
        if t not in query_terms:
            yield t, -1


def apply_circuitous(instance: Instance, space: FeatureSpace, target_delta,
                     stats: CorpusStats, budget: int = 16) -> tuple[Instance, np.ndarray]:
    """Greedy word edits pushing each document's engineered features toward
    the target deltas; best effort, at most `budget` edits per document.

    `target_delta` is either one vector shared by all documents or one row
    per document. Returns the perturbed instance and its recomputed feature
    matrix.
    """
    if space.kind != ENGINEERED_SPACE:
        raise ValueError("circuitous perturbations apply to engineered spaces")
    targets = np.asarray(target_delta, dtype=float)
    if targets.ndim == 1:
        targets = np.tile(targets, (instance.n_docs, 1))
    if targets.shape != (instance.n_docs, space.size):
        raise ValueError(f"target deltas have shape {targets.shape}, "
                         f"expected ({instance.n_docs}, {space.size})")
    query_terms = set(instance.query.bow)
    catalog = space.catalog_indices
    new_docs = []
    for d, doc in enumerate(instance.documents):
        target = targets[d]
        if not np.any(target):
            new_docs.append(doc)
            continue
        base = _doc_engineered(instance.query, doc.bow, stats, catalog)
        goal = base + target
        bow = dict(doc.bow)
        best_dist = float(np.linalg.norm(base - goal))
        for _ in range(budget):
            best_edit = None
            for term, change in _edit_candidates(bow, query_terms):
                cand = dict(bow)
                cand[term] = cand[term] + change
                if cand[term] <= 0:
                    del cand[term]
                dist = float(np.linalg.norm(
                    _doc_engineered(instance.query, cand, stats, catalog) - goal))
                if dist < best_dist - 1e-12:
                    best_dist = dist
                    best_edit = (term, change)
            if best_edit is None:
                break
            term, change = best_edit
            bow[term] = bow.get(term, 0) + change
            if bow[term] <= 0:
                del bow[term]
        if bow == doc.bow:
            new_docs.append(doc)
        else:
            text = rebuild_text(doc.text, instance.vocab,
                                 {t: bow.get(t, 0) for t in set(doc.bow) | set(bow)})
            new_docs.append(Document.from_text(doc.id, text, instance.vocab))
    perturbed = Instance(query=instance.query, documents=tuple(new_docs),
                         vocab=instance.vocab)
    return perturbed, feature_matrix(perturbed, space, stats)


def generate_perturbations(instance: Instance, space: FeatureSpace, ranker,
                           plan: PerturbationPlan, seed: int | None = None,
                           stats: CorpusStats | None = None,
                           cov: CovarianceEstimate | None = None,
                           circuitous_budget: int = 16) -> list[PerturbedSample]:
    """Build, apply, and score the perturbation neighborhood of an instance.

    Sample 0 is always the untouched anchor. Word spaces get direct word
    perturbations; engineered spaces get direct matrix edits when the ranker
    is tabular and circuitous word edits when it consumes text.
    """
    if seed is None:
        seed = plan.rng_seed
    m = space.size
    tabular = getattr(ranker, "input_kind", "text") == "tabular"
    if space.kind == WORD_SPACE and tabular:
        raise ValueError("word-space explanations need a text-input ranker")
    if tabular:
        ranker_base, col_map = tabular_views(instance, space, ranker, stats)
        base_matrix = ranker_base[:, col_map]
    else:
        ranker_base, col_map = None, None
        base_matrix = feature_matrix(instance, space, stats)
    masks = make_masks(m, plan, seed)
    deltas = None
    if plan.style == VALUE_DELTA:
        if cov is None:
            cov = estimate_covariance(base_matrix)
        deltas = sample_correlated(cov, len(masks), seed + 1)

    samples = [_anchor_sample(instance, space, ranker, base_matrix, tabular,
                              ranker_base)]
    for k, mask in enumerate(masks):
        try:
            samples.append(_one_sample(
                k + 1, instance, space, ranker, plan, base_matrix, mask,
                None if deltas is None else deltas[k], stats, tabular,
                circuitous_budget, ranker_base, col_map))
        except Exception as e:
            raise PerturbationError(
                f"ranker failed on perturbation sample {k + 1} "
                f"(mask {mask}): {e}") from e
    return samples


def _anchor_sample(instance, space, ranker, base_matrix, tabular,
                   ranker_base=None) -> PerturbedSample:
    f_scores = (np.asarray(ranker.score_matrix(ranker_base), dtype=float) if tabular
                else np.asarray(ranker.score_instance(instance), dtype=float))
    return PerturbedSample(
        index=0,
        simplified=SimplifiedInput.identity(space),
        matrix=base_matrix,
        f_scores=f_scores,
        instance=instance,
        query_rep=query_vector(instance, space),
    )


def _one_sample(index, instance, space, ranker, plan, base_matrix, mask, delta,
                stats, tabular, budget, ranker_base=None, col_map=None) -> PerturbedSample:
    m = space.size
    if space.kind == WORD_SPACE:
        z = np.ones(m)
        if plan.style == MASK:
            z[list(mask)] = 0.0
        else:
            z[list(mask)] = np.clip(1.0 + delta[list(mask)], 0.0, 2.0)
        simplified = SimplifiedInput(values=tuple(z))
        perturbed = apply_direct(instance, space, simplified)
        scores = np.asarray(ranker.score_instance(perturbed), dtype=float)
        return PerturbedSample(
            index=index, simplified=simplified,
            matrix=feature_matrix(perturbed, space, stats),
            f_scores=scores, instance=perturbed,
            query_rep=query_vector(perturbed, space))

    if tabular:
        full = ranker_base.copy()
        cols = [col_map[j] for j in mask]
        if plan.style == MASK:
            full[:, cols] = 0.0
        else:
            full[:, cols] += delta[list(mask)]
        scores = np.asarray(ranker.score_matrix(full), dtype=float)
        matrix = full[:, col_map]
        achieved = (matrix - base_matrix).mean(axis=0)
        return PerturbedSample(
            index=index, simplified=SimplifiedInput(values=tuple(achieved)),
            matrix=matrix, f_scores=scores, instance=None,
            query_rep=query_vector(instance, space))

    targets = np.zeros((instance.n_docs, m))
    if plan.style == MASK:
        targets[:, list(mask)] = -base_matrix[:, list(mask)]
    else:
        targets[:, list(mask)] = delta[list(mask)]
    perturbed, matrix = apply_circuitous(instance, space, targets, stats, budget)
    scores = np.asarray(ranker.score_instance(perturbed), dtype=float)
    achieved = (matrix - base_matrix).mean(axis=0)
    return PerturbedSample(
        index=index, simplified=SimplifiedInput(values=tuple(achieved)),
        matrix=matrix, f_scores=scores, instance=perturbed,
        query_rep=query_vector(perturbed, space))

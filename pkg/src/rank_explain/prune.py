"""Explanation-feature-set pruning.

Correlated explanation features dilute sparse linear attributions; this
module extracts a linearly independent column basis and, for small feature
sets, searches subsets exhaustively for the best-reconstructing one.
"""
from __future__ import annotations

import itertools

import numpy as np

from .core import Instance
from .explain import ExplainerConfig, fit
from .features import FeatureSpace, build_feature_space, feature_matrix
from .perturb import PerturbationPlan
from .rankers import CorpusStats

RANK_TOLERANCE = 1e-8
EXHAUSTIVE_LIMIT = 15


def independent_feature_set(matrix, tolerance: float = RANK_TOLERANCE) -> tuple[int, ...]:
    """Column subset forming a basis of the column space.

    Greedy pivoting in ascending column order: a column joins the basis when
    its residual against the span of already-kept columns exceeds the
    tolerance relative to the largest column norm. An all-zero matrix gives
    the empty set.
    """
    x = np.atleast_2d(np.asarray(matrix, dtype=float))
    n, m = x.shape
    norms = np.linalg.norm(x, axis=0)
    largest = norms.max() if m else 0.0
    if largest == 0.0:
        return ()
    threshold = tolerance * largest
    basis: list[np.ndarray] = []
    kept: list[int] = []
    for j in range(m):
        residual = x[:, j].copy()
        for q in basis:
            residual -= (q @ residual) * q
        # second orthogonalization pass keeps the basis numerically tight
        for q in basis:
            residual -= (q @ residual) * q
        norm = np.linalg.norm(residual)
        if norm > threshold:
            basis.append(residual / norm)
            kept.append(j)
    return tuple(kept)


def exhaustive_feature_selection(instance: Instance, ranker, space: FeatureSpace,
                                 k: int, config: ExplainerConfig | None = None,
                                 stats: CorpusStats | None = None,
                                 plan: PerturbationPlan | None = None) -> tuple[int, ...]:
    """Subset of at most k features maximizing re-fit training fidelity.

    Every candidate subset gets its own restricted fit; ties resolve to the
    lexicographically smallest subset. Feature counts above
    ``EXHAUSTIVE_LIMIT`` are rejected (use the greedy selector or the
    independent-set basis instead).
    """
    m = space.size
    if m > EXHAUSTIVE_LIMIT:
        raise ValueError(
            f"exhaustive selection enumerates subsets of at most {EXHAUSTIVE_LIMIT} "
            f"features (got {m}); use greedy selection instead")
    config = config or ExplainerConfig()
    best: tuple[float, tuple[int, ...]] | None = None
    for size in range(1, min(k, m) + 1):
        for combo in itertools.combinations(range(m), size):
            sub_space = space.restrict(combo)
            expl = fit(instance, ranker, sub_space, config, stats=stats, plan=plan)
            value = expl.training_fidelity
            if best is None or value > best[0] + 1e-12 or (
                    abs(value - best[0]) <= 1e-12 and combo < best[1]):
                best = (value, combo)
    return best[1]


def instance_basis(instance: Instance, space: FeatureSpace,
                   stats: CorpusStats | None = None,
                   tolerance: float = RANK_TOLERANCE) -> tuple[int, ...]:
    """Independent feature basis of one instance's feature matrix."""
    return independent_feature_set(feature_matrix(instance, space, stats), tolerance)


def corpus_basis(instances, space_kind: str, stats: CorpusStats | None = None,
                 tolerance: float = RANK_TOLERANCE) -> tuple[int, ...]:
    """Independent basis over the stacked feature matrices of many instances.

    Only meaningful for spaces whose features align across instances (the
    engineered catalog); word spaces differ per instance.
    """
    blocks = []
    for inst in instances:
        space = build_feature_space(inst, space_kind, stats)
        blocks.append(feature_matrix(inst, space, stats))
    return independent_feature_set(np.vstack(blocks), tolerance)

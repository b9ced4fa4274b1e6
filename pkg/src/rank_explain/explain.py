"""Listwise local explanation fitting.

Perturbation samples are weighted by an exponential kernel on summed cosine
distances, a sparse linear scorer is fit by full-batch gradient descent on
a differentiable listwise loss, and the result is truncated to the top-K
weights by magnitude.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import Instance, rank_from_scores
from .evaluation import kendall_tau
from .features import FeatureSpace, word_count_vector
from .losses import APPROX_NDCG, ListwiseObjective, LossKind
from .perturb import PerturbationPlan, generate_perturbations
from .rankers import CorpusStats

RANK_LIME_SYSTEM = "rank-lime"

KERNEL_ON_EXPLANATION = "explanation"
KERNEL_ON_INPUT = "input"


@dataclass(frozen=True)
class ExplainerConfig:
    loss: LossKind = field(default_factory=lambda: LossKind(APPROX_NDCG))
    sigma: float | None = None  # kernel width; defaults to (N_docs + 1) / 4
    k: int = 8
    l1_lambda: float = 0.01
    learning_rate: float = 0.05
    epochs: int = 500
    seed: int = 0
    kernel_space: str = KERNEL_ON_EXPLANATION
    optimizer: str = "gd"  # "gd" (fixed-step) or "adam" (adaptive, deterministic)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.kernel_space not in (KERNEL_ON_EXPLANATION, KERNEL_ON_INPUT):
            raise ValueError(f"unknown kernel space {self.kernel_space!r}")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class Explanation:
    """Sparse linear attribution over explanation features."""

    instance_id: str
    system: str
    feature_ids: tuple[int, ...]
    feature_names: tuple[str, ...]
    raw_weights: tuple[float, ...]
    display_weights: tuple[float, ...]
    training_fidelity: float | None

    def to_json_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "system": self.system,
            "features": [
                {"id": i, "name": n, "raw_weight": rw, "display_weight": dw}
                for i, n, rw, dw in zip(self.feature_ids, self.feature_names,
                                        self.raw_weights, self.display_weights)
            ],
            "fidelity": self.training_fidelity,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def dense_weights(self, m: int) -> np.ndarray:
        out = np.zeros(m)
        for i, w in zip(self.feature_ids, self.raw_weights):
            out[i] = w
        return out


def cosine_distance(u, v) -> float:
    """1 - cosine similarity; 0 when both vectors are zero, 1 when one is."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"vector length mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 and nv == 0.0:
        return 0.0
    if nu == 0.0 or nv == 0.0:
        return 1.0
    return float(1.0 - (u @ v) / (nu * nv))


def proximity(query_pair, doc_pairs, sigma: float) -> float:
    """Exponential kernel on the summed query + per-document cosine distances."""
    delta = cosine_distance(*query_pair)
    for x_rep, z_rep in doc_pairs:
        delta += cosine_distance(x_rep, z_rep)
    return float(np.exp(-(delta ** 2) / sigma ** 2))


def sparsify(weights, k: int) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Top-k features by |weight|, ties by ascending id; zero weights dropped."""
    if k < 1:
        raise ValueError("k must be at least 1")
    w = np.asarray(weights, dtype=float)
    order = sorted(range(w.size), key=lambda i: (-abs(w[i]), i))
    kept = [i for i in order[:k] if w[i] != 0.0]
    return tuple(kept), tuple(float(w[i]) for i in kept)


def normalize_for_display(raw_weights) -> tuple[float, ...]:
    """Scale weights so absolute values sum to one, preserving signs."""
    w = np.asarray(raw_weights, dtype=float)
    total = np.abs(w).sum()
    if total == 0.0:
        raise ValueError("cannot display-normalize all-zero weights")
    return tuple(float(v) for v in w / total)


def kernel_weights(samples, instance: Instance, space: FeatureSpace,
                   sigma: float, kernel_space: str = KERNEL_ON_EXPLANATION) -> np.ndarray:
    """Proximity weight of every perturbation sample to the anchor."""
    anchor = samples[0]
    weights = np.empty(len(samples))
    if kernel_space == KERNEL_ON_INPUT and anchor.instance is not None:
        width = len(instance.vocab)
        x_query = word_count_vector(instance.query.bow, width)
        x_docs = [word_count_vector(d.bow, width) for d in instance.documents]
        for i, s in enumerate(samples):
            z = s.instance if s.instance is not None else instance
            q_pair = (x_query, word_count_vector(z.query.bow, width))
            d_pairs = [(x_docs[d], word_count_vector(z.documents[d].bow, width))
                       for d in range(instance.n_docs)]
            weights[i] = proximity(q_pair, d_pairs, sigma)
        return weights
    x_query = anchor.query_rep
    x_matrix = anchor.matrix
    for i, s in enumerate(samples):
        q_pair = (x_query, s.query_rep if s.query_rep is not None else x_query)
        d_pairs = [(x_matrix[d], s.matrix[d]) for d in range(instance.n_docs)]
        weights[i] = proximity(q_pair, d_pairs, sigma)
    return weights


def _descend(stack: np.ndarray, pi: np.ndarray, objective: ListwiseObjective,
             config: ExplainerConfig) -> np.ndarray:
    """Full-batch descent on the kernel-weighted listwise loss plus L1.

    Features are standardized internally for conditioning; the returned
    weights are mapped back to original feature units. Both optimizers are
    deterministic: "gd" takes fixed steps (best for the saturating NDCG
    surrogates), "adam" takes adaptive steps (best for the convex pairwise
    and softmax losses, e.g. exact reconstruction of a linear ranker).
    """
    b, n, m = stack.shape
    flat = stack.reshape(b * n, m)
    mu = flat.mean(axis=0)
    sd = flat.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    zs = (stack - mu) / sd
    pi_sum = float(pi.sum())
    w = np.zeros(m)
    m1 = np.zeros(m)
    m2 = np.zeros(m)
    lr = config.learning_rate
    lam = config.l1_lambda
    adam = config.optimizer == "adam"
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for t in range(1, config.epochs + 1):
        preds = np.einsum("bnm,m->bn", zs, w)
        _, grads = objective.evaluate(preds)
        grad = np.einsum("bnm,bn->m", zs, grads * pi[:, None]) / pi_sum
        grad += lam * np.sign(w)
        if adam:
            m1 = beta1 * m1 + (1.0 - beta1) * grad
            m2 = beta2 * m2 + (1.0 - beta2) * grad * grad
            grad = (m1 / (1.0 - beta1 ** t)) / (np.sqrt(m2 / (1.0 - beta2 ** t)) + eps)
        w -= lr * grad
    return w / sd


def weighted_training_loss(samples, weights_dense, instance, space,
                           config: ExplainerConfig, pi=None) -> float:
    """Kernel-weighted mean listwise loss of a weight vector on the samples."""
    stack = np.stack([s.matrix for s in samples])
    targets = np.stack([s.f_scores for s in samples])
    objective = ListwiseObjective(config.loss, targets)
    if pi is None:
        sigma = config.sigma if config.sigma is not None else (instance.n_docs + 1) / 4
        pi = kernel_weights(samples, instance, space, sigma, config.kernel_space)
    preds = np.einsum("bnm,m->bn", stack, np.asarray(weights_dense, dtype=float))
    losses, _ = objective.evaluate(preds)
    return float((losses * pi).sum() / pi.sum())


def fit(instance: Instance, ranker, space: FeatureSpace, config: ExplainerConfig,
        stats: CorpusStats | None = None, plan: PerturbationPlan | None = None,
        cov=None) -> Explanation:
    """Fit a sparse listwise explanation of the ranker on one instance."""
    if instance.n_docs == 1:
        return Explanation(
            instance_id=instance.query.id, system=RANK_LIME_SYSTEM,
            feature_ids=(), feature_names=(), raw_weights=(),
            display_weights=(), training_fidelity=1.0)
    if plan is None:
        plan = PerturbationPlan()
    samples = generate_perturbations(instance, space, ranker, plan,
                                     seed=config.seed, stats=stats, cov=cov)
    sigma = config.sigma if config.sigma is not None else (instance.n_docs + 1) / 4
    pi = kernel_weights(samples, instance, space, sigma, config.kernel_space)
    for s, w in zip(samples, pi):
        s.kernel_weight = float(w)

    stack = np.stack([s.matrix for s in samples])
    targets = np.stack([s.f_scores for s in samples])
    objective = ListwiseObjective(config.loss, targets)
    full_weights = _descend(stack, pi, objective, config)

    ids, raw = sparsify(full_weights, config.k)
    anchor = samples[0]
    f_ranking = rank_from_scores(anchor.f_scores)
    dense = np.zeros(space.size)
    for i, w in zip(ids, raw):
        dense[i] = w
    g_ranking = rank_from_scores(anchor.matrix @ dense)
    tau = kendall_tau(f_ranking, g_ranking)
    display = normalize_for_display(raw) if raw else ()
    return Explanation(
        instance_id=instance.query.id, system=RANK_LIME_SYSTEM,
        feature_ids=ids, feature_names=tuple(space.names[i] for i in ids),
        raw_weights=raw, display_weights=display, training_fidelity=tau)

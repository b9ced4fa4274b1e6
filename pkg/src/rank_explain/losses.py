"""Differentiable listwise losses with analytic gradients.

Each loss takes a predicted score vector and a target (raw scores or
normalized gains) and returns ``(loss, grad)`` where ``grad`` is the exact
gradient with respect to the predicted scores. All four losses are
translation-invariant in the predictions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import min_max_normalize

LISTNET = "listnet"
RANKNET = "ranknet"
APPROX_NDCG = "approx-ndcg"
NEURAL_NDCG = "neural-ndcg"

LOSS_NAMES = (LISTNET, RANKNET, APPROX_NDCG, NEURAL_NDCG)


@dataclass(frozen=True)
class LossKind:
    """Loss selector plus smoothing temperature for the NDCG surrogates."""

    name: str
    temperature: float = 0.1

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise ValueError(f"unknown loss {self.name!r}; pick one of {LOSS_NAMES}")
        if not (self.temperature > 0 and np.isfinite(self.temperature)):
            raise ValueError("temperature must be finite and positive")


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - np.max(x)
    e = np.exp(z)
    return e / e.sum()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def ideal_dcg(gains: np.ndarray) -> float:
    """DCG of the gains sorted descending (positions 1-based, log2 discount)."""
    g = np.sort(np.asarray(gains, dtype=float))[::-1]
    discounts = 1.0 / np.log2(np.arange(len(g)) + 2.0)
    return float(g @ discounts)


def _check_pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"prediction/target shape mismatch: {p.shape} vs {t.shape}")
    if p.size < 1:
        raise ValueError("need at least one score")
    return p, t


def listnet_loss(pred, target) -> tuple[float, np.ndarray]:
    """Cross-entropy between top-1 distributions of target and prediction."""
    p, t = _check_pair(pred, target)
    q_target = _softmax(t)
    log_q_pred = p - np.max(p)
    log_q_pred = log_q_pred - np.log(np.exp(log_q_pred).sum())
    loss = float(-(q_target @ log_q_pred))
    grad = np.exp(log_q_pred) - q_target
    return loss, grad


def ranknet_loss(pred, target) -> tuple[float, np.ndarray]:
    """Pairwise logistic loss over target-ordered pairs, averaged per pair."""
    p, t = _check_pair(pred, target)
    ordered = t[:, None] > t[None, :]
    n_pairs = int(ordered.sum())
    if n_pairs == 0:
        return 0.0, np.zeros(p.size)
    margins = p[:, None] - p[None, :]
    loss = float(np.logaddexp(0.0, -margins[ordered]).sum()) / n_pairs
    slopes = _sigmoid(-margins) * ordered
    grad = (slopes.sum(axis=0) - slopes.sum(axis=1)) / n_pairs
    return loss, grad


def approx_ndcg_loss(pred, gains, temperature: float = 0.1) -> tuple[float, np.ndarray]:
    """1 - NDCG with ranks replaced by sums of pairwise sigmoids."""
    p, g = _check_pair(pred, gains)
    n = p.size
    idcg = ideal_dcg(g)
    if idcg <= 0.0:
        return 0.0, np.zeros(n)
    diff = (p[None, :] - p[:, None]) / temperature  # diff[i, j] = (s_j - s_i) / T
    sig = _sigmoid(diff)
    np.fill_diagonal(sig, 0.0)
    ranks = 1.0 + sig.sum(axis=1)
    log_ranks = np.log2(1.0 + ranks)
    dcg = float(g @ (1.0 / log_ranks))
    loss = 1.0 - dcg / idcg

    # d(1/log2(1+r)) / dr, then chain through the sigmoid rank estimates.
    d_disc = -1.0 / ((1.0 + ranks) * np.log(2.0) * log_ranks ** 2)
    e = g * d_disc
    w = sig * (1.0 - sig) / temperature
    np.fill_diagonal(w, 0.0)
    ddcg = e @ w - e * w.sum(axis=1)
    grad = -ddcg / idcg
    return float(loss), grad


def neural_ndcg_loss(pred, gains, temperature: float = 0.1) -> tuple[float, np.ndarray]:
    """1 - NDCG of gains smoothed through a soft (row-stochastic) sort matrix."""
    p, g = _check_pair(pred, gains)
    n = p.size
    idcg = ideal_dcg(g)
    if idcg <= 0.0:
        return 0.0, np.zeros(n)
    perm = soft_sort_matrix(p, temperature)
    smoothed = perm @ g
    discounts = 1.0 / np.log2(np.arange(n) + 2.0)
    dcg = float(discounts @ smoothed)
    loss = 1.0 - dcg / idcg

    # B[i, j] = d(DCG) / d(logits[i, j]) for the row-i softmax.
    b = discounts[:, None] * perm * (g[None, :] - smoothed[:, None])
    a = n + 1.0 - 2.0 * np.arange(1, n + 1)
    sign = np.sign(p[:, None] - p[None, :])
    c_grad = np.diag(sign.sum(axis=1)) - sign
    ddcg = (a @ b - b.sum(axis=0) @ c_grad) / temperature
    grad = -ddcg / idcg
    return float(loss), grad


def soft_sort_matrix(pred: np.ndarray, temperature: float) -> np.ndarray:
    """Row-stochastic relaxation of the descending sort permutation.

    Row i (1-based position) is softmax(((n + 1 - 2i) * pred - A @ 1) / tau)
    with A the pairwise absolute-difference matrix; every row sums to one.
    """
    p = np.asarray(pred, dtype=float)
    n = p.size
    abs_diff = np.abs(p[:, None] - p[None, :])
    col = abs_diff.sum(axis=1)
    a = n + 1.0 - 2.0 * np.arange(1, n + 1)
    logits = (a[:, None] * p[None, :] - col[None, :]) / temperature
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(kind: LossKind, pred, f_scores) -> tuple[float, np.ndarray]:
    """Evaluate a loss against a perturbed sample's black-box scores.

    The NDCG surrogates compare against min-max-normalized gains; ListNet
    and RankNet consume the raw scores as the target.
    """
    if kind.name == LISTNET:
        return listnet_loss(pred, f_scores)
    if kind.name == RANKNET:
        return ranknet_loss(pred, f_scores)
    gains = np.asarray(min_max_normalize(f_scores))
    if kind.name == APPROX_NDCG:
        return approx_ndcg_loss(pred, gains, kind.temperature)
    return neural_ndcg_loss(pred, gains, kind.temperature)


class ListwiseObjective:
    """Batched loss evaluation over a stack of perturbation samples.

    Precomputes everything that only depends on the targets so that the
    per-epoch cost inside gradient descent is a handful of vectorized ops.
    Semantics match `loss_and_grad` applied sample by sample.
    """

    def __init__(self, kind: LossKind, target_scores: np.ndarray):
        self.kind = kind
        t = np.asarray(target_scores, dtype=float)
        if t.ndim != 2:
            raise ValueError("target_scores must be a (samples, docs) matrix")
        self.n_samples, self.n_docs = t.shape
        if kind.name == LISTNET:
            shifted = t - t.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            self._target_softmax = e / e.sum(axis=1, keepdims=True)
        elif kind.name == RANKNET:
            self._ordered = t[:, :, None] > t[:, None, :]
            counts = self._ordered.sum(axis=(1, 2))
            self._pair_scale = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
        else:
            self._gains = np.vstack([min_max_normalize(row) for row in t])
            self._idcg = np.array([ideal_dcg(row) for row in self._gains])
            self._live = self._idcg > 0.0
            self._inv_idcg = np.where(self._live, 1.0 / np.where(self._live, self._idcg, 1.0), 0.0)

    def evaluate(self, preds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample losses (B,) and gradients (B, n) at the given predictions."""
        p = np.asarray(preds, dtype=float)
        name = self.kind.name
        if name == LISTNET:
            shifted = p - p.max(axis=1, keepdims=True)
            log_q = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            losses = -(self._target_softmax * log_q).sum(axis=1)
            grads = np.exp(log_q) - self._target_softmax
            return losses, grads
        if name == RANKNET:
            margins = p[:, :, None] - p[:, None, :]
            per_pair = np.logaddexp(0.0, -margins) * self._ordered
            losses = per_pair.sum(axis=(1, 2)) * self._pair_scale
            slopes = _sigmoid(-margins) * self._ordered
            grads = (slopes.sum(axis=1) - slopes.sum(axis=2)) * self._pair_scale[:, None]
            return losses, grads
        if name == APPROX_NDCG:
            return self._approx(p)
        return self._neural(p)

    def _approx(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        temp = self.kind.temperature
        g = self._gains
        diff = (p[:, None, :] - p[:, :, None]) / temp
        sig = _sigmoid(diff)
        eye = np.eye(self.n_docs, dtype=bool)
        sig[:, eye] = 0.0
        ranks = 1.0 + sig.sum(axis=2)
        log_ranks = np.log2(1.0 + ranks)
        dcg = (g / log_ranks).sum(axis=1)
        losses = np.where(self._live, 1.0 - dcg * self._inv_idcg, 0.0)
        d_disc = -1.0 / ((1.0 + ranks) * np.log(2.0) * log_ranks ** 2)
        e = g * d_disc
        w = sig * (1.0 - sig) / temp
        w[:, eye] = 0.0
        ddcg = np.einsum("bi,bim->bm", e, w) - e * w.sum(axis=2)
        grads = -ddcg * self._inv_idcg[:, None]
        grads[~self._live] = 0.0
        return losses, grads

    def _neural(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        temp = self.kind.temperature
        n = self.n_docs
        g = self._gains
        abs_diff = np.abs(p[:, :, None] - p[:, None, :])
        col = abs_diff.sum(axis=2)
        a = n + 1.0 - 2.0 * np.arange(1, n + 1)
        logits = (a[None, :, None] * p[:, None, :] - col[:, None, :]) / temp
        logits -= logits.max(axis=2, keepdims=True)
        e = np.exp(logits)
        perm = e / e.sum(axis=2, keepdims=True)
        smoothed = np.einsum("bij,bj->bi", perm, g)
        discounts = 1.0 / np.log2(np.arange(n) + 2.0)
        dcg = smoothed @ discounts
        losses = np.where(self._live, 1.0 - dcg * self._inv_idcg, 0.0)
        b = discounts[None, :, None] * perm * (g[:, None, :] - smoothed[:, :, None])
        sign = np.sign(p[:, :, None] - p[:, None, :])
        col_b = b.sum(axis=1)
        ddcg = (np.einsum("i,bim->bm", a, b)
                - col_b * sign.sum(axis=2)
                + np.einsum("bj,bjm->bm", col_b, sign)) / temp
        grads = -ddcg * self._inv_idcg[:, None]
        grads[~self._live] = 0.0
        return losses, grads


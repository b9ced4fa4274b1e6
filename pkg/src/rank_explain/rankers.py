"""Black-box scoring functions f(q, D) -> per-document scores.

In-repo reference rankers (BM25, ridge linear, boosted stumps) plus a
line-delimited JSON client for external ranker processes. All in-repo
rankers are pure: identical inputs give bit-identical scores.
"""
from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .core import Document, Instance, Query, RankExplainError

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


class ExternalRankerError(RankExplainError):
    """Base class for external-ranker protocol failures."""


class ExternalTimeoutError(ExternalRankerError):
    pass


class MalformedResponseError(ExternalRankerError):
    pass


class ScoreCountMismatchError(ExternalRankerError):
    pass


@dataclass(frozen=True)
class CorpusStats:
    """Corpus-level statistics backing BM25 and idf features."""

    doc_count: int
    avg_doc_len: float
    df: dict[int, int]

    @classmethod
    def from_documents(cls, documents) -> "CorpusStats":
        documents = list(documents)
        df: dict[int, int] = {}
        total_len = 0
        for doc in documents:
            total_len += sum(doc.bow.values())
            for term in doc.bow:
                df[term] = df.get(term, 0) + 1
        n = len(documents)
        return cls(doc_count=n, avg_doc_len=(total_len / n) if n else 0.0, df=df)

    def idf(self, term: int) -> float:
        """Okapi idf with the +1 inside the log; never negative."""
        d = self.df.get(term, 0)
        return math.log((self.doc_count - d + 0.5) / (d + 0.5) + 1.0)


def bm25_score(query: Query, doc: Document, stats: CorpusStats,
               k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> float:
    """Okapi BM25 score of one query-document pair."""
    if stats.doc_count <= 0 or stats.avg_doc_len <= 0:
        raise ValueError("BM25 needs corpus stats built over a non-empty corpus")
    doc_len = sum(doc.bow.values())
    norm = k1 * (1.0 - b + b * doc_len / stats.avg_doc_len)
    score = 0.0
    for term, q_count in query.bow.items():
        tf = doc.bow.get(term, 0)
        if tf == 0:
            continue
        score += q_count * stats.idf(term) * tf * (k1 + 1.0) / (tf + norm)
    return score


@dataclass(frozen=True)
class LinearTabularModel:
    """w . x + bias applied per document row."""

    weights: tuple[float, ...]
    bias: float = 0.0

    input_kind = "tabular"

    @property
    def n_inputs(self) -> int:
        return len(self.weights)

    def score_matrix(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(self.weights):
            raise ValueError(
                f"feature matrix has {x.shape[1] if x.ndim == 2 else '?'} columns, "
                f"model expects {len(self.weights)}")
        return x @ np.asarray(self.weights) + self.bias


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    left: float   # value when x[feature] <= threshold
    right: float  # value when x[feature] >  threshold
    weight: float


@dataclass(frozen=True)
class StumpEnsemble:
    """Additive ensemble of decision stumps (pairwise-boosted)."""

    stumps: tuple[Stump, ...]
    n_features: int

    input_kind = "tabular"

    @property
    def n_inputs(self) -> int:
        return self.n_features

    def score_matrix(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(
                f"feature matrix has {x.shape[1] if x.ndim == 2 else '?'} columns, "
                f"ensemble expects {self.n_features}")
        scores = np.zeros(x.shape[0])
        for s in self.stumps:
            scores += s.weight * np.where(x[:, s.feature] <= s.threshold, s.left, s.right)
        return scores


def score_tabular(model, features) -> np.ndarray:
    """Score each row of an N x M feature matrix with a tabular model."""
    return model.score_matrix(features)


def train_linear_ranker(rows, ridge: float = 1e-3) -> LinearTabularModel:
    """Ridge least-squares fit; the penalty applies to weights, not the bias."""
    if not rows:
        raise ValueError("need at least one training row")
    x = np.asarray([r[0] for r in rows], dtype=float)
    y = np.asarray([r[1] for r in rows], dtype=float)
    if x.ndim != 2:
        raise ValueError("training rows have inconsistent feature dimensions")
    n, m = x.shape
    design = np.hstack([x, np.ones((n, 1))])
    penalty = ridge * np.eye(m + 1)
    penalty[m, m] = 0.0
    theta = np.linalg.solve(design.T @ design + penalty, design.T @ y)
    return LinearTabularModel(weights=tuple(theta[:m]), bias=float(theta[m]))


def _candidate_thresholds(values: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct observed values."""
    distinct = np.unique(values)
    if distinct.size < 2:
        return np.empty(0)
    return (distinct[:-1] + distinct[1:]) / 2.0


def train_stump_ensemble(groups, rounds: int = 50) -> StumpEnsemble:
    """Boost decision stumps on the exponential pairwise ranking loss.

    `groups` is a list of query groups, each a list of (features, relevance)
    rows. Every (higher-relevance, lower-relevance) pair within a group is a
    training pair; each round greedily picks the (feature, threshold, polarity)
    stump with the lowest weighted pair error.
    """
    rows = [(np.asarray(f, dtype=float), float(rel)) for g in groups for f, rel in g]
    if not rows:
        raise ValueError("no training rows")
    n_features = rows[0][0].shape[0]

    pairs = []  # (index of higher-relevance row, index of lower-relevance row)
    offset = 0
    for g in groups:
        k = len(g)
        for i in range(k):
            for j in range(k):
                if g[i][1] > g[j][1]:
                    pairs.append((offset + i, offset + j))
        offset += k
    if not pairs:
        raise ValueError("no query group contains documents of differing relevance")

    x = np.vstack([f for f, _ in rows])
    hi = np.array([p[0] for p in pairs])
    lo = np.array([p[1] for p in pairs])
    weights = np.full(len(pairs), 1.0 / len(pairs))

    stumps: list[Stump] = []
    for _ in range(rounds):
        best = None  # (err, feature, threshold, left, right)
        for f in range(n_features):
            col = x[:, f]
            for theta in _candidate_thresholds(col):
                # h(x) in {0, 1}; a pair is correct when h(hi) > h(lo),
                # half-credit on ties.
                out = (col > theta).astype(float)
                diff = out[hi] - out[lo]
                err = float(weights @ (0.5 * (1.0 - diff)))
                for left, right, e in ((0.0, 1.0, err), (1.0, 0.0, 1.0 - err)):
                    if best is None or e < best[0] - 1e-15:
                        best = (e, f, float(theta), left, right)
        if best is None:
            break  # every feature is constant; nothing to split on
        err, f, theta, left, right = best
        err = min(max(err, 1e-10), 1.0 - 1e-10)
        alpha = 0.5 * math.log((1.0 - err) / err)
        if alpha <= 0:
            break  # no stump beats chance; boosting has converged
        stumps.append(Stump(feature=f, threshold=theta, left=left, right=right, weight=alpha))
        out = np.where(x[:, f] <= theta, left, right)
        weights = weights * np.exp(-alpha * (out[hi] - out[lo]))
        weights /= weights.sum()
    return StumpEnsemble(stumps=tuple(stumps), n_features=n_features)


class BM25Ranker:
    """Text-input ranker scoring every document of an instance with BM25."""

    input_kind = "text"

    def __init__(self, stats: CorpusStats, k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        self.stats = stats
        self.k1 = k1
        self.b = b

    def score_instance(self, instance: Instance) -> np.ndarray:
        return np.array([bm25_score(instance.query, d, self.stats, self.k1, self.b)
                         for d in instance.documents])


class ExternalRanker:
    """Client for a ranker living in a child process.

    Speaks newline-delimited JSON over the child's stdin/stdout: one request,
    one response, matched by id. A single request is in flight per connection;
    callers wanting parallelism open multiple connections.
    """

    def __init__(self, command, mode: str = "text", timeout: float = 30.0):
        if mode not in ("text", "tabular"):
            raise ValueError(f"unknown external ranker mode {mode!r}")
        self.mode = mode
        self.input_kind = mode
        self.timeout = timeout
        if isinstance(command, str):
            command = shlex.split(command)
        self._proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)
        self._next_id = 0
        self._lock = threading.Lock()

    def close(self):
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _round_trip(self, request: dict, n_docs: int) -> np.ndarray:
        with self._lock:
            line = json.dumps(request, separators=(",", ":"))
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as e:
                raise ExternalRankerError(f"external ranker process is gone: {e}") from e
            reply = _read_line_with_timeout(self._proc.stdout, self.timeout)
        try:
            payload = json.loads(reply)
        except json.JSONDecodeError as e:
            raise MalformedResponseError(f"response is not valid JSON: {reply!r}") from e
        if not isinstance(payload, dict) or payload.get("id") != request["id"]:
            raise MalformedResponseError(f"response id does not match request: {reply!r}")
        scores = payload.get("scores")
        if not isinstance(scores, list) or not all(
                isinstance(s, (int, float)) and not isinstance(s, bool) for s in scores):
            raise MalformedResponseError(f"response carries no numeric score list: {reply!r}")
        if len(scores) != n_docs:
            raise ScoreCountMismatchError(
                f"expected {n_docs} scores, got {len(scores)}")
        return np.asarray(scores, dtype=float)

    def score_instance(self, instance: Instance) -> np.ndarray:
        if self.mode != "text":
            raise ValueError("this connection speaks tabular mode")
        self._next_id += 1
        request = {
            "id": self._next_id,
            "mode": "text",
            "query": instance.query.text,
            "documents": [{"id": d.id, "text": d.text} for d in instance.documents],
        }
        return self._round_trip(request, instance.n_docs)

    def score_matrix(self, features) -> np.ndarray:
        if self.mode != "tabular":
            raise ValueError("this connection speaks text mode")
        x = np.asarray(features, dtype=float)
        self._next_id += 1
        request = {
            "id": self._next_id,
            "mode": "tabular",
            "query": "",
            "features": [[float(v) for v in row] for row in x],
        }
        return self._round_trip(request, x.shape[0])


def _read_line_with_timeout(stream, timeout: float) -> str:
    """Read one line, raising ExternalTimeoutError after `timeout` seconds."""
    result: list[str] = []

    def _read():
        result.append(stream.readline())

    reader = threading.Thread(target=_read, daemon=True)
    reader.start()
    reader.join(timeout)
    if reader.is_alive():
        raise ExternalTimeoutError(f"no response within {timeout} s")
    line = result[0] if result else ""
    if not line:
        raise MalformedResponseError("external ranker closed its output stream")
    return line


def external_rank(instance_or_features, ranker: ExternalRanker) -> np.ndarray:
    """Score an instance (text mode) or feature matrix (tabular mode)."""
    if isinstance(instance_or_features, Instance):
        return ranker.score_instance(instance_or_features)
    return ranker.score_matrix(instance_or_features)


class SerializingRanker:
    """Adapter that serializes all scoring calls on a shared ranker."""

    def __init__(self, inner):
        self._inner = inner
        self._lock = threading.Lock()
        self.input_kind = inner.input_kind

    def score_instance(self, instance: Instance) -> np.ndarray:
        with self._lock:
            return self._inner.score_instance(instance)

    def score_matrix(self, features) -> np.ndarray:
        with self._lock:
            return self._inner.score_matrix(features)

"""Ranking-explanation metrics and the benchmark runner.

Metrics: Kendall's tau fidelity of the reconstructed ordering, NDCG@10 of
the explanation's ordering under min-max-normalized black-box scores, and
the inverse-size interpretability score 8/k.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import Instance, Ranking, min_max_normalize, rank_from_scores
from .features import FeatureSpace, build_feature_space, feature_matrix, tabular_views
from .rankers import CorpusStats

INTERPRETABILITY_BUDGET = 8


def kendall_tau(r1: Ranking, r2: Ranking) -> float:
    """Tau-a between two tie-free rankings of the same documents."""
    n = len(r1.ordering)
    if n != len(r2.ordering):
        raise ValueError(
            f"rankings cover different document sets ({n} vs {len(r2.ordering)})")
    if n == 1:
        return 1.0
    pos1 = np.empty(n, dtype=int)
    pos2 = np.empty(n, dtype=int)
    for rank, doc in enumerate(r1.ordering):
        pos1[doc] = rank
    for rank, doc in enumerate(r2.ordering):
        pos2[doc] = rank
    concordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            same = (pos1[i] < pos1[j]) == (pos2[i] < pos2[j])
            concordant += 1 if same else -1
    return concordant / (n * (n - 1) / 2)


def ndcg_at_k(ordering, gains, k: int = 10) -> float:
    """NDCG@k with linear gains; 1.0 when the gains carry no signal."""
    gains = np.asarray(gains, dtype=float)
    n = gains.size
    depth = min(k, n)
    discounts = 1.0 / np.log2(np.arange(depth) + 2.0)
    dcg = float(gains[np.asarray(ordering[:depth], dtype=int)] @ discounts)
    ideal = float(np.sort(gains)[::-1][:depth] @ discounts)
    if ideal == 0.0:
        return 1.0
    return dcg / ideal


def interpretability(k: int) -> float:
    """Inverse-size score: 8 / k for an explanation with k features."""
    if k == 0:
        raise ValueError("interpretability is undefined for empty explanations")
    return INTERPRETABILITY_BUDGET / k


def score_original(ranker, instance: Instance, space: FeatureSpace,
                   stats: CorpusStats | None = None) -> np.ndarray:
    """Black-box scores of the unperturbed instance."""
    if getattr(ranker, "input_kind", "text") == "tabular":
        matrix, _ = tabular_views(instance, space, ranker, stats)
        return np.asarray(ranker.score_matrix(matrix), dtype=float)
    return np.asarray(ranker.score_instance(instance), dtype=float)


def explanation_ranking(instance: Instance, explanation, space: FeatureSpace,
                        stats: CorpusStats | None = None) -> Ranking:
    """Ranking induced by the explanation's linear per-document scorer."""
    matrix = feature_matrix(instance, space, stats)
    weights = np.zeros(space.size)
    for i, w in zip(explanation.feature_ids, explanation.raw_weights):
        weights[i] = w
    return rank_from_scores(matrix @ weights)


def fidelity(instance: Instance, ranker, explanation, space: FeatureSpace,
             stats: CorpusStats | None = None) -> float:
    """Kendall's tau between the black-box ranking and the explanation's."""
    f_ranking = rank_from_scores(score_original(ranker, instance, space, stats))
    g_ranking = explanation_ranking(instance, explanation, space, stats)
    return kendall_tau(f_ranking, g_ranking)


def explain_ndcg(instance: Instance, ranker, explanation, space: FeatureSpace,
                 stats: CorpusStats | None = None, k: int = 10) -> float:
    """NDCG@k of the explanation's ordering under normalized black-box gains."""
    f_scores = score_original(ranker, instance, space, stats)
    gains = min_max_normalize(f_scores)
    g_ranking = explanation_ranking(instance, explanation, space, stats)
    return ndcg_at_k(g_ranking.ordering, gains, k)


@dataclass(frozen=True)
class EvalRow:
    ranker: str
    system: str
    instance_id: str
    fidelity: float | None
    explain_ndcg: float | None
    interpretability: float | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]

    def aggregates(self) -> list[dict]:
        """Mean metrics per (ranker, system), in first-seen order."""
        order: list[tuple[str, str]] = []
        buckets: dict[tuple[str, str], list[EvalRow]] = {}
        for row in self.rows:
            key = (row.ranker, row.system)
            if key not in buckets:
                buckets[key] = []
                order.append(key)
            buckets[key].append(row)
        out = []
        for key in order:
            good = [r for r in buckets[key] if r.ok]
            agg = {"ranker": key[0], "system": key[1],
                   "instances": len(buckets[key]), "failures": len(buckets[key]) - len(good)}
            for metric in ("fidelity", "explain_ndcg", "interpretability"):
                vals = [getattr(r, metric) for r in good]
                agg[metric] = float(np.mean(vals)) if vals else None
            out.append(agg)
        return out

    def to_json_dict(self) -> dict:
        return {
            "rows": [
                {"ranker": r.ranker, "system": r.system, "instance_id": r.instance_id,
                 "fidelity": r.fidelity, "explain_ndcg": r.explain_ndcg,
                 "interpretability": r.interpretability, "error": r.error}
                for r in self.rows
            ],
            "aggregates": self.aggregates(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def mean(self, ranker: str, system: str, metric: str) -> float:
        for agg in self.aggregates():
            if agg["ranker"] == ranker and agg["system"] == system:
                value = agg[metric]
                if value is None:
                    raise ValueError(f"no successful instances for {ranker}/{system}")
                return value
        raise KeyError(f"no aggregate for {ranker}/{system}")

    def format_table(self) -> str:
        header = ("Ranker", "System", "Fidelity", "Explain-NDCG", "Intly")
        lines = []
        for agg in self.aggregates():
            def cell(value):
                return "-" if value is None else f"{value:.4f}"
            lines.append((agg["ranker"], agg["system"], cell(agg["fidelity"]),
                          cell(agg["explain_ndcg"]), cell(agg["interpretability"])))
        widths = [max(len(header[c]), *(len(row[c]) for row in lines)) if lines
                  else len(header[c]) for c in range(5)]
        def fmt(row):
            return " | ".join(str(v).ljust(w) for v, w in zip(row, widths))
        sep = "-+-".join("-" * w for w in widths)
        return "\n".join([fmt(header), sep] + [fmt(row) for row in lines])


def run_benchmark(dataset, rankers: dict, systems: dict, space_kind: str,
                  seed: int = 0, stats: CorpusStats | None = None,
                  max_instances: int = 50) -> EvalReport:
    """Explain every instance with every (ranker, system) pair and score it.

    `systems` maps a system name to a callable
    ``(instance, ranker, space, stats, seed) -> Explanation``. Per-instance
    failures are recorded in the report rather than raised. Deterministic:
    instance i runs with seed ``seed + i``.
    """
    dataset = list(dataset)[:max_instances]
    if not dataset:
        raise ValueError("benchmark dataset is empty")
    rows: list[EvalRow] = []
    for ranker_name, ranker in rankers.items():
        for system_name, system_fn in systems.items():
            for i, instance in enumerate(dataset):
                space = build_feature_space(instance, space_kind, stats)
                try:
                    expl = system_fn(instance, ranker, space, stats, seed + i)
                    rows.append(EvalRow(
                        ranker=ranker_name, system=system_name,
                        instance_id=instance.query.id,
                        fidelity=fidelity(instance, ranker, expl, space, stats),
                        explain_ndcg=explain_ndcg(instance, ranker, expl, space, stats),
                        interpretability=interpretability(len(expl.feature_ids)),
                    ))
                except Exception as e:
                    rows.append(EvalRow(
                        ranker=ranker_name, system=system_name,
                        instance_id=instance.query.id,
                        fidelity=None, explain_ndcg=None, interpretability=None,
                        error=f"{type(e).__name__}: {e}"))
    return EvalReport(rows=tuple(rows))

"""Local, model-agnostic explanations for learning-to-rank models."""

from .core import (
    Document,
    Instance,
    InvalidScoreError,
    Query,
    RankExplainError,
    Ranking,
    Vocabulary,
    min_max_normalize,
    rank_from_scores,
    to_bow,
    tokenize,
)
from .explain import Explanation, ExplainerConfig, fit
from .features import build_feature_space, compute_engineered, feature_matrix
from .losses import LossKind
from .perturb import PerturbationPlan, generate_perturbations
from .rankers import (
    BM25Ranker,
    CorpusStats,
    ExternalRanker,
    LinearTabularModel,
    StumpEnsemble,
    bm25_score,
    score_tabular,
    train_linear_ranker,
    train_stump_ensemble,
)

__version__ = "0.1.0"

__all__ = [
    "BM25Ranker",
    "CorpusStats",
    "Document",
    "Explanation",
    "ExplainerConfig",
    "ExternalRanker",
    "Instance",
    "InvalidScoreError",
    "LinearTabularModel",
    "LossKind",
    "PerturbationPlan",
    "Query",
    "RankExplainError",
    "Ranking",
    "StumpEnsemble",
    "Vocabulary",
    "bm25_score",
    "build_feature_space",
    "compute_engineered",
    "feature_matrix",
    "fit",
    "generate_perturbations",
    "min_max_normalize",
    "rank_from_scores",
    "score_tabular",
    "to_bow",
    "tokenize",
    "train_linear_ranker",
    "train_stump_ensemble",
]

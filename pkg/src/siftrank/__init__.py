"""Stochastic batched listwise ranking with LLM or synthetic rankers."""

from .engine import (
    partition_into_batches,
    reassemble,
    refine_partition,
    run_ranking,
    run_trial,
    update_scores,
)
from .rankers import (
    BatchOrdering,
    BatchRequest,
    BudgetedRanker,
    ChatCompletionsClient,
    LLMRanker,
    NoiseModel,
    OracleRanker,
    Ranker,
    RemoteModelConfig,
    TokenUsage,
)
from .types import (
    ConvergenceReason,
    Document,
    InflectionMethod,
    IterationResult,
    RankConfig,
    RankedDocument,
    ScoreBoard,
    Statistic,
    TrialRecord,
)

__version__ = "0.1.0"

__all__ = [
    "BatchOrdering",
    "BatchRequest",
    "BudgetedRanker",
    "ChatCompletionsClient",
    "ConvergenceReason",
    "Document",
    "InflectionMethod",
    "IterationResult",
    "LLMRanker",
    "NoiseModel",
    "OracleRanker",
    "RankConfig",
    "RankedDocument",
    "Ranker",
    "RemoteModelConfig",
    "ScoreBoard",
    "Statistic",
    "TokenUsage",
    "TrialRecord",
    "partition_into_batches",
    "reassemble",
    "refine_partition",
    "run_ranking",
    "run_trial",
    "update_scores",
]

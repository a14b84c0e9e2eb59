"""Request and response models for the ranking service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class DocumentIn(BaseModel):
    id: Optional[str] = None
    text: str


class NoiseSpec(BaseModel):
    kind: Literal["none", "adjacent_swap", "uniform_shuffle_prob"] = "none"
    parameter: float = Field(default=0.0, ge=0.0, le=1.0)
    rng_seed: int = 0


class OracleSpec(BaseModel):
    """Synthetic ranker definition: a known best-first order plus noise."""

    order: list[str]
    noise: NoiseSpec = NoiseSpec()


class ModelSpec(BaseModel):
    """Remote model settings; the API key itself never crosses the wire."""

    model: str = "gpt-5-nano"
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: Optional[float] = None
    reasoning_effort: Optional[str] = "minimal"
    capture_reasoning: bool = False
    requests_per_second: Optional[float] = Field(default=None, gt=0)


class RankOptions(BaseModel):
    batch_size: int = Field(default=10, ge=2)
    max_trials: int = Field(default=50, ge=1)
    stability_window: int = Field(default=5, ge=2)
    statistic: Literal["mean", "median"] = "mean"
    inflection_method: Literal["elbow", "gap"] = "elbow"
    inflection_tolerance: int = Field(default=0, ge=0)
    concurrency: int = Field(default=8, ge=1)
    rng_seed: int = 0
    retry_limit: int = Field(default=3, ge=0)


class RankRequest(BaseModel):
    documents: list[DocumentIn]
    query: str
    options: RankOptions = RankOptions()
    ranker: Literal["llm", "oracle"] = "llm"
    oracle: Optional[OracleSpec] = None
    llm: ModelSpec = ModelSpec()
    summarize: bool = False
    max_requests: Optional[int] = Field(default=None, ge=1)


class IterationOut(BaseModel):
    iteration: int
    corpus_size: int
    convergence_trial: int
    convergence_reason: str
    inflection: int


class RankedDocumentOut(BaseModel):
    id: str
    rank: int
    score: float
    iterations: int
    exposures: int


class UsageOut(BaseModel):
    requests: int = 0
    input_tokens: int = 0
    output_tokens: int = 0


class RankResponse(BaseModel):
    query: str
    ranker: str
    options: RankOptions
    iterations: list[IterationOut]
    ranking: list[RankedDocumentOut]
    usage: UsageOut
    summarization_usage: Optional[UsageOut] = None
    summarization_failures: list[str] = []
    reasoning_samples: list[str] = []
    wall_time_seconds: float


class ChainScoreIn(BaseModel):
    """One ranked chain row from a rank report."""

    id: str
    rank: int
    iterations: int


class ClusterRequest(BaseModel):
    chains: list[ChainScoreIn]
    edges: list[tuple[str, str]]
    nodes: list[str] = []
    survivors_only: bool = True
    diameters: list[int] = [1, 2, 3]


class ClusterOut(BaseModel):
    rank: int
    seed: str
    diameter: int
    size: int
    mass: float
    density: float
    score: float
    members: list[str]


class ClusterResponse(BaseModel):
    clusters: list[ClusterOut]
    warnings: list[str] = []


class ChainsRequest(BaseModel):
    edges: list[tuple[str, str]]
    changed: list[str]
    summaries: Optional[dict[str, str]] = None


class ChainOut(BaseModel):
    id: str
    functions: list[str]
    text: str


class ChainsResponse(BaseModel):
    chains: list[ChainOut]

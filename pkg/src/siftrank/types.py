"""Domain types shared by the ranking engine and its callers."""

from __future__ import annotations

import enum
import statistics
from dataclasses import dataclass, field


class Statistic(str, enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"


class InflectionMethod(str, enum.Enum):
    ELBOW = "elbow"
    GAP = "gap"


class ConvergenceReason(str, enum.Enum):
    ORDERING_STABLE = "ordering_stable"
    INFLECTION_STABLE = "inflection_stable"
    MAX_TRIALS = "max_trials"


@dataclass(frozen=True)
class Document:
    """One unit of ranking: an opaque id plus the text payload to rank.

    ``text`` is whatever should be shown to the ranker (raw content or a
    summary of it); when a summary is substituted, the original payload is
    kept in ``source_text``. ``origin_index`` is the document's position in
    the input and breaks score ties deterministically.
    """

    id: str
    text: str
    origin_index: int = 0
    source_text: str | None = None


@dataclass(frozen=True)
class RankConfig:
    """Parameters of a ranking run.

    batch_size: documents per ranker call (>= 2).
    max_trials: hard cap on shuffle-and-rank passes per iteration.
    stability_window: consecutive trials that must agree for convergence.
    statistic: positional aggregate, mean or median.
    inflection_method: elbow (max curvature) or gap (largest score step).
    inflection_tolerance: allowed wobble, in index units, between the
        window's inflection points while still counting as stable.
    concurrency_cap: max in-flight ranker calls within one trial.
    rng_seed: seeds every shuffle; fixed seed + deterministic ranker
        reproduces the run exactly.
    retry_limit: retries granted to the remote ranker per batch.
    """

    batch_size: int = 10
    max_trials: int = 50
    stability_window: int = 5
    statistic: Statistic = Statistic.MEAN
    inflection_method: InflectionMethod = InflectionMethod.ELBOW
    inflection_tolerance: int = 0
    concurrency_cap: int = 1
    rng_seed: int = 0
    retry_limit: int = 3

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.max_trials < 1:
            raise ValueError("max_trials must be at least 1")
        if self.stability_window < 2:
            raise ValueError("stability_window must be at least 2")
        if self.stability_window > self.max_trials:
            raise ValueError("stability_window cannot exceed max_trials")
        if self.inflection_tolerance < 0:
            raise ValueError("inflection_tolerance must be non-negative")
        if self.concurrency_cap < 1:
            raise ValueError("concurrency_cap must be at least 1")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be non-negative")


@dataclass(frozen=True)
class TrialRecord:
    """Positions recorded by one shuffle-partition-rank pass."""

    trial_index: int
    positions: dict[str, int]

    @property
    def participation(self) -> frozenset[str]:
        return frozenset(self.positions)


@dataclass
class ScoreBoard:
    """Running positional statistics for the current iteration.

    ``scores`` always reflects the statistic over each document's recorded
    positions; ``exposure`` counts how many trials the document was batched
    in. Documents excluded by a trial's remainder simply accrue nothing.
    """

    positions: dict[str, list[int]] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)
    exposure: dict[str, int] = field(default_factory=dict)
    _sums: dict[str, int] = field(default_factory=dict, repr=False)

    def record(self, doc_id: str, position: int, statistic: Statistic) -> None:
        seen = self.positions.setdefault(doc_id, [])
        seen.append(position)
        self._sums[doc_id] = self._sums.get(doc_id, 0) + position
        self.exposure[doc_id] = len(seen)
        if statistic is Statistic.MEAN:
            self.scores[doc_id] = self._sums[doc_id] / len(seen)
        else:
            self.scores[doc_id] = float(statistics.median(seen))


@dataclass(frozen=True)
class IterationResult:
    """Outcome of one refinement iteration.

    ``ranking`` is the full score-sorted id list at the convergence trial.
    ``frozen`` is the suffix of ``ranking`` below ``inflection`` that was
    set aside for final reassembly; it is empty for the run's last
    iteration, whose entire ranking flows into the output (in that case
    ``inflection`` equals the ranking length).
    """

    iteration: int
    ranking: list[str]
    inflection: int
    convergence_trial: int
    convergence_reason: ConvergenceReason
    frozen: list[str]

    @property
    def corpus_size(self) -> int:
        return len(self.ranking)


@dataclass(frozen=True)
class RankedDocument:
    """One row of the final output ranking."""

    id: str
    final_rank: int
    last_score: float
    iterations_survived: int
    exposures: int

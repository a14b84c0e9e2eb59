"""Exception hierarchy for ranking runs and ranker backends."""

from __future__ import annotations


class SiftRankError(Exception):
    """Base class for all package errors."""


class RankerError(SiftRankError):
    """A batch-ranking backend failed to produce a usable ordering."""


class UnrepairableOutputError(RankerError):
    """Model output contained none of the expected keys.

    Carries the raw text so callers can log or retry with context.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class RemoteRankerError(RankerError):
    """Remote model call failed after exhausting retries."""

    def __init__(self, message: str, status_code: int | None = None, body: str = ""):
        super().__init__(message)
        self.status_code = status_code
        self.body = body


class BudgetExceededError(SiftRankError):
    """The configured request budget would be exceeded by the next call."""

    def __init__(self, limit: int):
        super().__init__(f"request budget of {limit} exhausted")
        self.limit = limit


class RankingAbortedError(SiftRankError):
    """A ranking run stopped early; carries partial state for diagnostics."""

    def __init__(self, message: str, iteration: int, trial: int,
                 completed_iterations=None, cause: Exception | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.trial = trial
        self.completed_iterations = list(completed_iterations or [])
        self.cause = cause


class ReassemblyError(SiftRankError):
    """Internal invariant violated while stitching ranking segments together."""

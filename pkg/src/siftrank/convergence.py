"""Inflection detection on sorted score curves and trial-stability checks."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .types import ConvergenceReason

_FLAT_EPS = 1e-12


def find_inflection_elbow(values: Sequence[float]) -> int | None:
    """Locate the point of maximum curvature in an ascending score curve.

    Curvature is estimated as the largest second difference of the min-max
    normalized curve. Returns a 1-based index i meaning "keep items 1..i";
    ties resolve to the smallest i. Returns None when the curve is exactly
    linear (every second difference zero), which callers must treat as a
    degenerate inflection.
    """
    n = len(values)
    if n < 3:
        raise ValueError("elbow detection needs at least 3 points")
    lo, hi = values[0], values[-1]
    span = hi - lo
    if span <= _FLAT_EPS:
        return None
    norm = [(v - lo) / span for v in values]
    best_index: int | None = None
    best = 0.0
    flat = True
    for j in range(1, n - 1):
        d2 = norm[j + 1] - 2.0 * norm[j] + norm[j - 1]
        if abs(d2) > _FLAT_EPS:
            flat = False
        if best_index is None or d2 > best + _FLAT_EPS:
            best_index = j
            best = d2
    if flat:
        return None
    return best_index + 1


def find_inflection_gap(values: Sequence[float]) -> int:
    """Return the 1-based index before the largest jump between neighbors.

    Ties resolve to the smallest index, keeping the fewest (best) items.
    """
    n = len(values)
    if n < 2:
        raise ValueError("gap detection needs at least 2 points")
    best_index = 0
    best = values[1] - values[0]
    for j in range(1, n - 1):
        gap = values[j + 1] - values[j]
        if gap > best + _FLAT_EPS:
            best_index = j
            best = gap
    return best_index + 1


@dataclass
class StabilityHistory:
    """Rolling window of per-trial rankings and inflection indices."""

    window: int
    rankings: deque = field(init=False)
    inflections: deque = field(init=False)

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("stability window must be at least 2")
        self.rankings = deque(maxlen=self.window)
        self.inflections = deque(maxlen=self.window)

    def push(self, ranking: Sequence[str], inflection: int) -> None:
        self.rankings.append(tuple(ranking))
        self.inflections.append(inflection)

    def __len__(self) -> int:
        return len(self.rankings)


def check_stability(history: StabilityHistory, window: int | None = None,
                    tolerance: int = 0) -> ConvergenceReason | None:
    """Evaluate the two convergence conditions over the trailing window.

    Ordering stability (checked first) requires the last ``window`` rankings
    to be pairwise identical. Failing that, inflection stability requires
    the last ``window`` inflection indices to lie within ``tolerance`` of
    each other. Returns None while neither holds or the history is short.
    """
    w = history.window if window is None else window
    if len(history.rankings) < w:
        return None
    rankings = list(history.rankings)[-w:]
    first = rankings[0]
    if all(r == first for r in rankings[1:]):
        return ConvergenceReason.ORDERING_STABLE
    inflections = list(history.inflections)[-w:]
    if max(inflections) - min(inflections) <= tolerance:
        return ConvergenceReason.INFLECTION_STABLE
    return None

"""Outer loop of the ranking algorithm.

A run repeats shuffle-partition-rank trials over the working corpus until
the score-sorted ordering or its inflection point holds steady across the
stability window, splits the ranking at the inflection point, freezes the
tail, and recurses on the head. The frozen tails are concatenated under
the final iteration's ranking to produce the output.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from . import convergence
from .errors import RankerError, RankingAbortedError, ReassemblyError
from .rankers import BatchOrdering, BatchRequest, Ranker
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


def partition_into_batches(shuffled: Sequence[str], batch_size: int,
                           priority: frozenset[str] | set[str] = frozenset(),
                           ) -> tuple[list[list[str]], list[str]]:
    """Cut a shuffled id list into full batches plus the excluded remainder.

    Produces floor(n / batch_size) batches of exactly batch_size ids. Ids
    owed participation (``priority``) are swapped out of the remainder zone
    before cutting, so each is guaranteed a batch. When the corpus is
    smaller than one batch, a single undersized batch holds everything.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    n = len(shuffled)
    if n == 0:
        return [], []
    m = n // batch_size
    if m == 0:
        return [list(shuffled)], []
    cutoff = m * batch_size
    if len(priority) > cutoff:
        raise ValueError(
            f"{len(priority)} priority ids cannot fit into {cutoff} batch slots"
        )
    order = list(shuffled)
    stranded = [i for i in range(cutoff, n) if order[i] in priority]
    if stranded:
        evictable = [i for i in range(cutoff) if order[i] not in priority]
        for idx in stranded:
            j = evictable.pop()
            order[idx], order[j] = order[j], order[idx]
    batches = [order[i * batch_size:(i + 1) * batch_size] for i in range(m)]
    return batches, order[cutoff:]


def update_scores(board: ScoreBoard, record: TrialRecord,
                  statistic: Statistic) -> ScoreBoard:
    """Fold one trial's positions into the running scoreboard."""
    for doc_id, position in record.positions.items():
        board.record(doc_id, position, statistic)
    return board


def refine_partition(ranking: Sequence[str], tau: int) -> tuple[list[str], list[str]]:
    """Split a ranking at the inflection index into (advance, frozen)."""
    if tau < 1:
        raise ValueError("partition index must be at least 1")
    return list(ranking[:tau]), list(ranking[tau:])


def reassemble(final_ranking: Sequence[str],
               frozen_stack: Sequence[Sequence[str]]) -> list[str]:
    """Concatenate the last ranking with the frozen tails, newest first.

    ``frozen_stack`` must already be ordered newest to oldest. Overlapping
    segments indicate a corrupted run and abort.
    """
    output: list[str] = list(final_ranking)
    seen = set(output)
    if len(seen) != len(output):
        raise ReassemblyError("final ranking contains duplicate ids")
    for segment in frozen_stack:
        for doc_id in segment:
            if doc_id in seen:
                raise ReassemblyError(f"id {doc_id!r} appears in two segments")
            seen.add(doc_id)
            output.append(doc_id)
    return output


def run_trial(corpus_ids: Sequence[str], query: str, trial_index: int,
              board: ScoreBoard, config: RankConfig, ranker: Ranker, *,
              rng: random.Random, texts: dict[str, str],
              priority: frozenset[str] = frozenset(),
              executor: ThreadPoolExecutor | None = None) -> TrialRecord:
    """Run one shuffle-partition-rank pass and fold it into the board.

    Returns the trial's position record; ids excluded by the remainder cut
    are exactly ``set(corpus_ids) - record.participation`` and must be fed
    back as the next trial's priority set.
    """
    if len(corpus_ids) < 2:
        raise ValueError("a trial needs at least 2 documents")
    shuffled = list(corpus_ids)
    rng.shuffle(shuffled)
    batches, _ = partition_into_batches(shuffled, config.batch_size, priority)

    def rank_one(batch: list[str]) -> BatchOrdering:
        request = BatchRequest(
            entries={doc_id: texts[doc_id] for doc_id in batch},
            query=query,
        )
        ordering = ranker.rank_batch(request)
        if set(ordering.ordered_keys) != set(batch) or \
                len(ordering.ordered_keys) != len(batch):
            raise RankerError("ranker returned keys that are not a permutation of the batch")
        return ordering

    if executor is not None and len(batches) > 1:
        orderings = list(executor.map(rank_one, batches))
    else:
        orderings = [rank_one(batch) for batch in batches]

    positions: dict[str, int] = {}
    for ordering in orderings:
        for pos, doc_id in enumerate(ordering.ordered_keys, start=1):
            positions[doc_id] = pos
    record = TrialRecord(trial_index=trial_index, positions=positions)
    update_scores(board, record, config.statistic)
    return record


def _forced_split(n: int) -> int:
    # Guarantees strict shrink when no usable inflection exists.
    return n - max(1, n // 10)


def _effective_inflection(curve: Sequence[float], method: InflectionMethod) -> int:
    """Detect the partition index, falling back when the curve is degenerate."""
    n = len(curve)
    if n < 2:
        return max(1, n - 1)
    if method is InflectionMethod.ELBOW and n >= 3:
        index = convergence.find_inflection_elbow(curve)
        if index is None:
            index = _forced_split(n)
    else:
        index = convergence.find_inflection_gap(curve)
    if index >= n:
        index = _forced_split(n)
    return index


def _validate_corpus(corpus: Sequence[Document]) -> None:
    if not corpus:
        raise ValueError("corpus is empty")
    seen: set[str] = set()
    for doc in corpus:
        if not doc.id:
            raise ValueError("document with empty id")
        if doc.id in seen:
            raise ValueError(f"duplicate document id {doc.id!r}")
        seen.add(doc.id)
        if not doc.text:
            raise ValueError(f"document {doc.id!r} has empty text")


def run_ranking(corpus: Sequence[Document], query: str, config: RankConfig,
                ranker: Ranker) -> tuple[list[RankedDocument], list[IterationResult]]:
    """Rank a corpus against a query.

    Returns the full ranking (a permutation of the input, best first) and
    the per-iteration records. A single-document corpus returns immediately
    without invoking the ranker.
    """
    _validate_corpus(corpus)
    if len(corpus) == 1:
        only = corpus[0]
        return [RankedDocument(only.id, 1, 1.0, 1, 0)], []

    texts = {doc.id: doc.text for doc in corpus}
    origin = {doc.id: doc.origin_index for doc in corpus}
    rng = random.Random(config.rng_seed)
    executor = (ThreadPoolExecutor(max_workers=config.concurrency_cap)
                if config.concurrency_cap > 1 else None)

    iteration_results: list[IterationResult] = []
    frozen_stack: list[list[str]] = []
    last_score: dict[str, float] = {}
    survived: dict[str, int] = {}
    exposures: dict[str, int] = {}
    active: list[str] = [doc.id for doc in corpus]

    try:
        k = 0
        final_ranking: list[str] | None = None
        while final_ranking is None:
            k += 1
            board = ScoreBoard()
            history = convergence.StabilityHistory(config.stability_window)
            priority: frozenset[str] = frozenset()
            ranking: list[str] = []
            tau = 0
            reason: ConvergenceReason | None = None
            t_star = 0
            for t in range(1, config.max_trials + 1):
                try:
                    record = run_trial(active, query, t, board, config, ranker,
                                       rng=rng, texts=texts, priority=priority,
                                       executor=executor)
                except RankerError as exc:
                    raise RankingAbortedError(
                        f"ranker failed in iteration {k}, trial {t}: {exc}",
                        iteration=k, trial=t,
                        completed_iterations=iteration_results, cause=exc,
                    ) from exc
                priority = frozenset(set(active) - record.participation)
                # Trial 1 may leave remainder ids unscored; they are ranked
                # from trial 2 onward, before any convergence can trigger.
                ranking = sorted(
                    (doc_id for doc_id in active if doc_id in board.scores),
                    key=lambda d: (board.scores[d], origin[d]),
                )
                curve = [board.scores[doc_id] for doc_id in ranking]
                tau = _effective_inflection(curve, config.inflection_method)
                history.push(ranking, tau)
                verdict = convergence.check_stability(
                    history, config.stability_window, config.inflection_tolerance
                )
                if verdict is ConvergenceReason.ORDERING_STABLE:
                    reason, t_star = verdict, t
                    break
                if verdict is ConvergenceReason.INFLECTION_STABLE:
                    reason, t_star = verdict, t
                    break
            if reason is None:
                reason, t_star = ConvergenceReason.MAX_TRIALS, config.max_trials

            for doc_id, count in board.exposure.items():
                exposures[doc_id] = exposures.get(doc_id, 0) + count
            for doc_id in ranking:
                last_score[doc_id] = board.scores[doc_id]
                survived[doc_id] = k

            if reason is ConvergenceReason.ORDERING_STABLE:
                advance: list[str] = list(ranking)
                frozen: list[str] = []
            else:
                advance, frozen = refine_partition(ranking, tau)

            if reason is ConvergenceReason.ORDERING_STABLE or len(advance) <= 1:
                # Terminal iteration: its whole ranking enters the output.
                iteration_results.append(IterationResult(
                    iteration=k, ranking=list(ranking), inflection=len(ranking),
                    convergence_trial=t_star, convergence_reason=reason,
                    frozen=[],
                ))
                final_ranking = list(ranking)
            else:
                iteration_results.append(IterationResult(
                    iteration=k, ranking=list(ranking), inflection=tau,
                    convergence_trial=t_star, convergence_reason=reason,
                    frozen=list(frozen),
                ))
                frozen_stack.append(frozen)
                active = advance
    finally:
        if executor is not None:
            executor.shutdown(wait=False, cancel_futures=True)

    output_ids = reassemble(final_ranking, list(reversed(frozen_stack)))
    if set(output_ids) != set(texts) or len(output_ids) != len(texts):
        raise ReassemblyError("reassembled ranking does not cover the corpus")
    ranked = [
        RankedDocument(
            id=doc_id,
            final_rank=rank,
            last_score=last_score[doc_id],
            iterations_survived=survived[doc_id],
            exposures=exposures.get(doc_id, 0),
        )
        for rank, doc_id in enumerate(output_ids, start=1)
    ]
    return ranked, iteration_results

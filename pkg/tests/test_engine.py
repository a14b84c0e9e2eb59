import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siftrank.engine import (
    partition_into_batches,
    reassemble,
    refine_partition,
    run_ranking,
    run_trial,
    update_scores,
)
from siftrank.errors import RankerError, RankingAbortedError, ReassemblyError
from siftrank.rankers import BatchOrdering, NoiseModel, OracleRanker, TokenUsage
from siftrank.types import (
    ConvergenceReason,
    Document,
    RankConfig,
    ScoreBoard,
    Statistic,
    TrialRecord,
)

from conftest import make_corpus, truth_ids


class TestPartition:
    def test_exact_division(self):
        ids = [f"x{i}" for i in range(25)]
        batches, remainder = partition_into_batches(ids, 5)
        assert len(batches) == 5
        assert all(len(b) == 5 for b in batches)
        assert remainder == []

    def test_priority_placement(self):
        rng = random.Random(11)
        ids = [f"x{i}" for i in range(20)] + ["a", "b", "c"]
        rng.shuffle(ids)
        batches, remainder = partition_into_batches(ids, 10, priority={"a", "b", "c"})
        batched = {doc for batch in batches for doc in batch}
        assert len(batches) == 2 and all(len(b) == 10 for b in batches)
        assert {"a", "b", "c"} <= batched
        assert len(remainder) == 3
        assert batched | set(remainder) == set(ids)
        assert batched & set(remainder) == set()

    def test_undersized_corpus_single_batch(self):
        batches, remainder = partition_into_batches([f"x{i}" for i in range(9)], 10)
        assert len(batches) == 1
        assert len(batches[0]) == 9
        assert remainder == []

    def test_impossible_priority(self):
        ids = [f"x{i}" for i in range(12)]
        with pytest.raises(ValueError):
            partition_into_batches(ids, 10, priority=set(ids))

    @given(
        n=st.integers(min_value=1, max_value=60),
        batch_size=st.integers(min_value=2, max_value=12),
        seed=st.integers(min_value=0, max_value=999),
        priority_share=st.floats(min_value=0, max_value=1),
    )
    @settings(max_examples=80)
    def test_partition_properties(self, n, batch_size, seed, priority_share):
        rng = random.Random(seed)
        ids = [f"x{i}" for i in range(n)]
        rng.shuffle(ids)
        m = n // batch_size
        limit = m * batch_size if m else n
        priority = set(rng.sample(ids, min(int(n * priority_share), limit)))
        batches, remainder = partition_into_batches(ids, batch_size, priority)
        flat = [doc for batch in batches for doc in batch]
        assert sorted(flat + remainder) == sorted(ids)
        assert len(set(flat)) == len(flat)
        if m:
            assert len(batches) == m and all(len(b) == batch_size for b in batches)
        else:
            assert len(batches) == 1 and remainder == []
        assert priority <= set(flat)


class TestScores:
    def test_mean(self):
        board = ScoreBoard()
        update_scores(board, TrialRecord(1, {"a": 1}), Statistic.MEAN)
        update_scores(board, TrialRecord(2, {"a": 2}), Statistic.MEAN)
        assert board.scores["a"] == 1.5

    def test_median(self):
        board = ScoreBoard()
        for t, p in enumerate([1, 1, 10], start=1):
            update_scores(board, TrialRecord(t, {"a": p}), Statistic.MEDIAN)
        assert board.scores["a"] == 1

    def test_exclusion_averages_over_participation_only(self):
        board = ScoreBoard()
        update_scores(board, TrialRecord(1, {"a": 5, "b": 2}), Statistic.MEAN)
        update_scores(board, TrialRecord(2, {"a": 1, "b": 4, "c": 3}), Statistic.MEAN)
        assert board.scores["c"] == 3
        assert board.exposure["c"] == 1
        assert board.exposure["a"] == board.exposure["b"] == 2


class TestRefineReassemble:
    def test_two_item_split(self):
        assert refine_partition(["a", "b"], 1) == (["a"], ["b"])

    def test_boundary_interior_split(self):
        ranking = [f"x{i}" for i in range(10)]
        advance, frozen = refine_partition(ranking, 9)
        assert len(advance) == 9 and frozen == ["x9"]

    def test_degenerate_partition_keeps_everything(self):
        advance, frozen = refine_partition(["a", "b"], 5)
        assert advance == ["a", "b"] and frozen == []

    def test_rejects_zero_index(self):
        with pytest.raises(ValueError):
            refine_partition(["a", "b"], 0)

    def test_reassembles_in_stack_order(self):
        assert reassemble(["a"], [["b", "c"]]) == ["a", "b", "c"]

    def test_no_frozen_stack(self):
        assert reassemble(["a", "b"], []) == ["a", "b"]

    def test_overlap_aborts(self):
        with pytest.raises(ReassemblyError):
            reassemble(["a", "b"], [["b"]])


def run_single_trial(n, batch_size, seed=0, priority=frozenset(), board=None):
    corpus = make_corpus(n)
    config = RankConfig(batch_size=batch_size, max_trials=10, stability_window=2)
    oracle = OracleRanker(truth_ids(corpus))
    board = board if board is not None else ScoreBoard()
    record = run_trial(
        truth_ids(corpus), "q", 1, board, config, oracle,
        rng=random.Random(seed), texts={d.id: d.text for d in corpus},
        priority=priority,
    )
    return record, oracle


class TestRunTrial:
    def test_536_documents_make_53_batches(self):
        record, oracle = run_single_trial(536, 10)
        assert oracle.usage.requests == 53
        assert len(record.participation) == 530

    def test_exact_division_excludes_nobody(self):
        record, oracle = run_single_trial(20, 10)
        assert oracle.usage.requests == 2
        assert len(record.participation) == 20

    def test_remainders_guaranteed_next_trial(self):
        corpus = make_corpus(23)
        config = RankConfig(batch_size=10, max_trials=10, stability_window=2)
        texts = {d.id: d.text for d in corpus}
        oracle = OracleRanker(truth_ids(corpus))
        for seed in range(20):
            rng = random.Random(seed)
            board = ScoreBoard()
            first = run_trial(truth_ids(corpus), "q", 1, board, config, oracle,
                              rng=rng, texts=texts)
            owed = set(truth_ids(corpus)) - first.participation
            assert len(owed) == 3
            second = run_trial(truth_ids(corpus), "q", 2, board, config, oracle,
                               rng=rng, texts=texts, priority=frozenset(owed))
            assert owed <= second.participation

    def test_positions_bounded_by_batch_length(self):
        record, _ = run_single_trial(7, 10)
        assert set(record.positions.values()) == set(range(1, 8))


class FailingRanker:
    def __init__(self, fail_after):
        self.calls = 0
        self.fail_after = fail_after
        self.usage = TokenUsage()

    def rank_batch(self, request):
        self.calls += 1
        if self.calls > self.fail_after:
            raise RankerError("backend exploded")
        return BatchOrdering(ordered_keys=list(request.entries))


class TestRunRanking:
    def test_single_document_short_circuits(self):
        oracle = OracleRanker(["only"])
        ranked, iterations = run_ranking(
            [Document("only", "text", 0)], "q", RankConfig(), oracle)
        assert len(ranked) == 1
        assert ranked[0].final_rank == 1
        assert ranked[0].iterations_survived == 1
        assert iterations == []
        assert oracle.usage.requests == 0

    def test_rejects_duplicate_ids(self):
        docs = [Document("a", "x", 0), Document("a", "y", 1)]
        with pytest.raises(ValueError, match="duplicate"):
            run_ranking(docs, "q", RankConfig(), OracleRanker(["a"]))

    def test_rejects_empty_text(self):
        with pytest.raises(ValueError, match="empty text"):
            run_ranking([Document("a", "", 0)], "q", RankConfig(), OracleRanker(["a"]))

    def test_rejects_empty_corpus(self):
        with pytest.raises(ValueError):
            run_ranking([], "q", RankConfig(), OracleRanker([]))

    def test_noiseless_oracle_top_ranks(self):
        corpus = make_corpus(100)
        for seed in range(5):
            oracle = OracleRanker(truth_ids(corpus))
            config = RankConfig(batch_size=10, max_trials=30, stability_window=3,
                                rng_seed=seed)
            ranked, _ = run_ranking(corpus, "q", config, oracle)
            assert ranked[0].id == "d0000"

    def test_output_is_permutation(self):
        corpus = make_corpus(83)
        noise = NoiseModel(kind="adjacent_swap", parameter=0.3, rng_seed=9)
        oracle = OracleRanker(truth_ids(corpus), noise)
        config = RankConfig(batch_size=7, max_trials=6, stability_window=2, rng_seed=4)
        ranked, _ = run_ranking(corpus, "q", config, oracle)
        assert sorted(d.id for d in ranked) == sorted(truth_ids(corpus))
        assert [d.final_rank for d in ranked] == list(range(1, 84))

    def test_deterministic_given_seed(self):
        corpus = make_corpus(60)
        noise = NoiseModel(kind="adjacent_swap", parameter=0.25, rng_seed=3)
        config = RankConfig(batch_size=10, max_trials=12, stability_window=3, rng_seed=8)
        results = []
        for _ in range(2):
            ranked, iterations = run_ranking(corpus, "q", config,
                                             OracleRanker(truth_ids(corpus), noise))
            results.append((ranked, iterations))
        assert results[0] == results[1]

    def test_concurrency_matches_serial(self):
        corpus = make_corpus(60)
        noise = NoiseModel(kind="adjacent_swap", parameter=0.25, rng_seed=3)
        outputs = []
        for cap in (1, 4):
            config = RankConfig(batch_size=10, max_trials=12, stability_window=3,
                                rng_seed=8, concurrency_cap=cap)
            ranked, iterations = run_ranking(corpus, "q", config,
                                             OracleRanker(truth_ids(corpus), noise))
            outputs.append((ranked, iterations))
        assert outputs[0] == outputs[1]

    def test_single_batch_corpus_converges_at_window(self):
        # A corpus smaller than one batch is ranked identically every trial
        # by a noiseless oracle, so ordering stabilizes as early as possible
        # and the first iteration is final.
        corpus = make_corpus(8)
        oracle = OracleRanker(truth_ids(corpus))
        config = RankConfig(batch_size=10, max_trials=50, stability_window=5)
        ranked, iterations = run_ranking(corpus, "q", config, oracle)
        assert len(iterations) == 1
        only = iterations[0]
        assert only.convergence_reason is ConvergenceReason.ORDERING_STABLE
        assert only.convergence_trial == 5
        assert oracle.usage.requests == 5
        assert [d.id for d in ranked] == truth_ids(corpus)

    def test_call_budget_accounting(self):
        corpus = make_corpus(137)
        oracle = OracleRanker(truth_ids(corpus))
        config = RankConfig(batch_size=10, max_trials=20, stability_window=3, rng_seed=2)
        _, iterations = run_ranking(corpus, "q", config, oracle)
        expected = sum(
            r.convergence_trial * max(1, r.corpus_size // config.batch_size)
            for r in iterations
        )
        assert oracle.usage.requests == expected

    def test_strict_shrink_and_frozen_bookkeeping(self):
        corpus = make_corpus(90)
        noise = NoiseModel(kind="adjacent_swap", parameter=0.2, rng_seed=1)
        config = RankConfig(batch_size=9, max_trials=8, stability_window=2, rng_seed=5)
        ranked, iterations = run_ranking(corpus, "q", config,
                                         OracleRanker(truth_ids(corpus), noise))
        sizes = [r.corpus_size for r in iterations]
        assert all(a > b for a, b in zip(sizes, sizes[1:]))
        by_id = {d.id: d for d in ranked}
        for result in iterations:
            assert result.frozen == result.ranking[result.inflection:]
            for doc_id in result.frozen:
                assert by_id[doc_id].iterations_survived == result.iteration
        final = iterations[-1]
        for doc_id in final.ranking:
            assert by_id[doc_id].iterations_survived == final.iteration

    def test_scores_stay_within_batch_bounds(self):
        corpus = make_corpus(47)
        noise = NoiseModel(kind="uniform_shuffle_prob", parameter=0.5, rng_seed=2)
        config = RankConfig(batch_size=6, max_trials=7, stability_window=2, rng_seed=3)
        ranked, _ = run_ranking(corpus, "q", config,
                                OracleRanker(truth_ids(corpus), noise))
        assert all(1.0 <= d.last_score <= 6.0 for d in ranked)
        assert all(d.exposures >= 1 for d in ranked)

    def test_ranker_failure_aborts_with_partial_state(self):
        corpus = make_corpus(40)
        config = RankConfig(batch_size=10, max_trials=6, stability_window=2, rng_seed=0)
        with pytest.raises(RankingAbortedError) as excinfo:
            run_ranking(corpus, "q", config, FailingRanker(fail_after=6))
        err = excinfo.value
        assert err.iteration == 1
        assert err.trial == 2
        assert isinstance(err.cause, RankerError)

    @given(
        n=st.integers(min_value=1, max_value=40),
        batch_size=st.integers(min_value=2, max_value=12),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    @settings(max_examples=40, deadline=None)
    def test_permutation_invariance_property(self, n, batch_size, seed):
        corpus = make_corpus(n)
        noise = NoiseModel(kind="adjacent_swap", parameter=0.3, rng_seed=seed)
        config = RankConfig(batch_size=batch_size, max_trials=5,
                            stability_window=2, rng_seed=seed)
        ranked, _ = run_ranking(corpus, "q", config,
                                OracleRanker(truth_ids(corpus), noise))
        assert sorted(d.id for d in ranked) == sorted(truth_ids(corpus))

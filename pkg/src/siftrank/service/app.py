"""HTTP surface wrapping the ranking engine and cluster analysis."""

from __future__ import annotations

import time

from fastapi import FastAPI, HTTPException

from .. import engine, graphrank, preprocess
from ..errors import (
    BudgetExceededError,
    RankingAbortedError,
    RemoteRankerError,
    SiftRankError,
)
from ..rankers import (
    BudgetedRanker,
    ChatCompletionsClient,
    LLMRanker,
    NoiseModel,
    OracleRanker,
    RemoteModelConfig,
    TokenUsage,
)
from ..types import Document, InflectionMethod, RankConfig, Statistic
from .schemas import (
    ChainOut,
    ChainsRequest,
    ChainsResponse,
    ClusterOut,
    ClusterRequest,
    ClusterResponse,
    IterationOut,
    RankedDocumentOut,
    RankOptions,
    RankRequest,
    RankResponse,
    UsageOut,
)


def _documents_from_request(request: RankRequest) -> list[Document]:
    documents = []
    for index, item in enumerate(request.documents):
        doc_id = item.id if item.id is not None else str(index + 1)
        documents.append(Document(id=doc_id, text=item.text, origin_index=index))
    return documents


def _config_from_options(options: RankOptions) -> RankConfig:
    return RankConfig(
        batch_size=options.batch_size,
        max_trials=options.max_trials,
        stability_window=options.stability_window,
        statistic=Statistic(options.statistic),
        inflection_method=InflectionMethod(options.inflection_method),
        inflection_tolerance=options.inflection_tolerance,
        concurrency_cap=options.concurrency,
        rng_seed=options.rng_seed,
        retry_limit=options.retry_limit,
    )


def _usage_out(usage: TokenUsage) -> UsageOut:
    return UsageOut(requests=usage.requests, input_tokens=usage.input_tokens,
                    output_tokens=usage.output_tokens)


def create_app(transport=None) -> FastAPI:
    """Build the service. ``transport`` overrides the outbound HTTP transport
    of every model client the app creates (tests, recording proxies)."""
    app = FastAPI(
        title="siftrank",
        description="Stochastic batched listwise ranking and call-graph cluster triage.",
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/rank", response_model=RankResponse)
    def rank(request: RankRequest) -> RankResponse:
        if not request.documents:
            raise HTTPException(status_code=400, detail="documents list is empty")
        documents = _documents_from_request(request)
        try:
            config = _config_from_options(request.options)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        summarize_client = None
        if request.ranker == "oracle":
            if request.oracle is None:
                raise HTTPException(status_code=400,
                                    detail="oracle ranker selected but no oracle given")
            if request.summarize:
                raise HTTPException(status_code=400,
                                    detail="summarization requires the llm ranker")
            order = request.oracle.order
            missing = [d.id for d in documents if d.id not in set(order)]
            if missing:
                raise HTTPException(
                    status_code=400,
                    detail=f"documents missing from oracle order: {missing[:5]}",
                )
            try:
                noise = NoiseModel(kind=request.oracle.noise.kind,
                                   parameter=request.oracle.noise.parameter,
                                   rng_seed=request.oracle.noise.rng_seed)
                ranker = OracleRanker(order, noise)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        else:
            spec = request.llm
            model_config = RemoteModelConfig(
                base_url=spec.base_url,
                model=spec.model,
                api_key_env=spec.api_key_env,
                temperature=spec.temperature,
                reasoning_effort=spec.reasoning_effort,
                retry_limit=request.options.retry_limit,
                requests_per_second=spec.requests_per_second,
            )
            try:
                client = ChatCompletionsClient(model_config, transport=transport)
                if request.summarize:
                    summarize_client = ChatCompletionsClient(model_config,
                                                             transport=transport)
            except RemoteRankerError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            ranker = LLMRanker(client, capture_reasoning=spec.capture_reasoning)

        summarization_usage = None
        failures: list[str] = []
        started = time.perf_counter()
        if summarize_client is not None:
            documents, failures = preprocess.summarize_corpus(
                documents, summarize_client, concurrency=config.concurrency_cap,
            )
            summarization_usage = _usage_out(summarize_client.usage)

        run_ranker = ranker
        if request.max_requests is not None:
            run_ranker = BudgetedRanker(ranker, request.max_requests)
        try:
            ranked, iterations = engine.run_ranking(documents, request.query,
                                                    config, run_ranker)
        except BudgetExceededError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except RankingAbortedError as exc:
            detail = (f"{exc} (completed {len(exc.completed_iterations)} iterations "
                      f"before aborting)")
            status = 409 if isinstance(exc.cause, BudgetExceededError) else 502
            raise HTTPException(status_code=status, detail=detail)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except SiftRankError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        elapsed = time.perf_counter() - started

        return RankResponse(
            query=request.query,
            ranker=request.ranker,
            options=request.options,
            iterations=[
                IterationOut(
                    iteration=r.iteration,
                    corpus_size=r.corpus_size,
                    convergence_trial=r.convergence_trial,
                    convergence_reason=r.convergence_reason.value,
                    inflection=r.inflection,
                )
                for r in iterations
            ],
            ranking=[
                RankedDocumentOut(
                    id=d.id, rank=d.final_rank, score=d.last_score,
                    iterations=d.iterations_survived, exposures=d.exposures,
                )
                for d in ranked
            ],
            usage=_usage_out(run_ranker.usage),
            summarization_usage=summarization_usage,
            summarization_failures=failures,
            reasoning_samples=getattr(ranker, "recent_reasoning", []),
            wall_time_seconds=round(elapsed, 3),
        )

    @app.post("/chains", response_model=ChainsResponse)
    def chains(request: ChainsRequest) -> ChainsResponse:
        graph = graphrank.CallGraph(
            nodes=frozenset(n for edge in request.edges for n in edge),
            edges=frozenset(tuple(edge) for edge in request.edges),
        ).with_nodes(request.changed)
        generated = graphrank.generate_call_chains(graph, request.changed,
                                                   request.summaries)
        return ChainsResponse(chains=[
            ChainOut(id=c.id, functions=list(c.functions), text=c.text)
            for c in generated
        ])

    @app.post("/cluster", response_model=ClusterResponse)
    def cluster(request: ClusterRequest) -> ClusterResponse:
        graph = graphrank.CallGraph(
            nodes=frozenset(n for edge in request.edges for n in edge),
            edges=frozenset(tuple(edge) for edge in request.edges),
        ).with_nodes(request.nodes)
        warnings: list[str] = []
        chains_in: list[graphrank.CallChain] = []
        for row in request.chains:
            functions = graphrank.parse_chain_id(row.id)
            unknown = [f for f in functions if f not in graph.nodes]
            if not functions or unknown:
                warnings.append(
                    f"chain {row.id!r} references unknown functions; skipped"
                )
                continue
            chains_in.append(graphrank.CallChain(
                functions, rank=row.rank, iterations=row.iterations,
            ))
        weights = graphrank.compute_function_weights(
            chains_in, survivors_only=request.survivors_only
        )
        if not weights:
            warnings.append("no chains survived filtering; cluster table is empty")
            return ClusterResponse(clusters=[], warnings=warnings)
        ranked = graphrank.score_clusters(graphrank.build_clusters(
            graph, weights, diameters=request.diameters,
        ))
        return ClusterResponse(
            clusters=[
                ClusterOut(
                    rank=i, seed=c.seed, diameter=c.diameter, size=len(c.members),
                    mass=c.mass, density=c.density, score=c.score,
                    members=list(c.members),
                )
                for i, c in enumerate(ranked, start=1)
            ],
            warnings=warnings,
        )

    return app


app = create_app()

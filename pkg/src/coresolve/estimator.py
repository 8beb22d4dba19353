"""High-level resolver with a scikit-learn style parameter surface.

QueryResolver.fit ingests a mention corpus and builds the shared,
immutable structures (statistics, q-gram index, feature model). Each
resolve call then runs the full query pipeline: canopy retrieval,
working-set construction, influence tables, and sampling. Results carry
the resolved entity plus trace and timing breakdowns.

Working-set convention: canopy members are relabeled to dense ids
0..n-1 in corpus order; query templates take the ids after them. All
sampler structures speak working ids; results are translated back.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import blocking, influence, samplers, scheduler
from .corpus import Mention, QueryNode, compute_stats, document_context
from .engine import EngineResult, ParallelConfig, run_parallel
from .errors import EmptyResultError
from .evaluation import F1Tracker
from .features import Scorer, default_model, load_weights
from .samplers import RunTrace, SamplerConfig
from .state import EntityState

# Full pairwise matrices are quadratic in canopy size; above this the
# samplers fall back to lazy per-pair caching.
MATRIX_LIMIT = 2500


@dataclass
class Resolution:
    """Outcome of one resolved query."""

    query: QueryNode
    mention_ids: list[int]
    mentions: list[Mention]
    canopy_size: int
    trace: RunTrace
    timings: dict
    state: EntityState = field(repr=False, default=None)
    engine_stats: dict | None = None
    worker_traces: list[RunTrace] | None = None


@dataclass
class WatchlistResolution:
    """Outcome of a multi-query run: per-query entities plus the
    aggregate schedule trace."""

    queries: list[QueryNode]
    entities: list[list[int] | None]
    unresolved: list[int]
    result: scheduler.WatchlistResult
    timings: dict

    @property
    def total_proposals(self) -> int:
        return self.result.total_proposals

    def mean_f1(self) -> float:
        return self.result.final_mean_f1()

    def to_csv(self, path) -> None:
        self.result.to_csv(path)


class QueryResolver(BaseEstimator):
    """Query-driven entity resolution over a mention corpus.

    Parameters mirror the pipeline stages: blocking (q, min_jaccard),
    influence decay (decay_p), sampling (algorithm, acceptance,
    tau_alpha, samples, seed, adaptive stopping), scheduling (schedule,
    k_slice, window, patience), and parallelism (workers, contention).
    With workers > 1, samples is the per-worker budget.
    """

    def __init__(
        self,
        algorithm: str = "hybrid_attract",
        acceptance: str = "greedy",
        tau_alpha: float = 0.9,
        samples: int = 1000,
        q: int = 3,
        min_jaccard: float = 0.3,
        decay_p: float = 0.05,
        seed: int = 0,
        adaptive: bool = False,
        schedule: str = "random",
        k_slice: int = 500,
        window: int = 100,
        patience: int = 5,
        weights: str | None = None,
        workers: int = 1,
        contention: str = "resample",
    ):
        self.algorithm = algorithm
        self.acceptance = acceptance
        self.tau_alpha = tau_alpha
        self.samples = samples
        self.q = q
        self.min_jaccard = min_jaccard
        self.decay_p = decay_p
        self.seed = seed
        self.adaptive = adaptive
        self.schedule = schedule
        self.k_slice = k_slice
        self.window = window
        self.patience = patience
        self.weights = weights
        self.workers = workers
        self.contention = contention

    # -- fitting -----------------------------------------------------------

    def fit(self, X: list[Mention], y=None) -> "QueryResolver":
        """Ingest the corpus: statistics, q-gram index, feature model."""
        self.mentions_ = list(X)
        self.stats_ = compute_stats(self.mentions_)
        self.index_ = blocking.build_index(self.mentions_, q=self.q)
        self.model_ = load_weights(self.weights) if self.weights else default_model()
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "mentions_"):
            raise NotFittedError("QueryResolver must be fitted before resolving")

    # -- working-set assembly -----------------------------------------------

    def _template(self, qn: QueryNode, working_id: int) -> Mention:
        template = qn.as_mention(working_id)
        if qn.context_level == "none":
            template = replace(template, context="")
        elif qn.context_level == "document":
            doc = document_context(self.mentions_, template.doc_id)
            if doc:
                template = replace(template, context=(template.context + " " + doc).strip())
        return template

    def _working_set(self, queries: list[QueryNode], member_ids: list[int]):
        """Relabel canopy members and append one template per query."""
        working = [replace(self.mentions_[cid], id=i) for i, cid in enumerate(member_ids)]
        template_ids = []
        context_off = []
        for qn in queries:
            wid = len(working)
            working.append(self._template(qn, wid))
            template_ids.append(wid)
            if qn.context_level == "none":
                context_off.append(wid)
        scorer = Scorer(working, self.model_, self.stats_, context_off=context_off)
        if len(working) <= MATRIX_LIMIT:
            scorer.build_matrix()
        return working, template_ids, scorer

    def _tables(self, scorer: Scorer, member_ids: list[int], template_id: int):
        """Attract and repel tables for one query, as the algorithm needs."""
        attract = repel = None
        if self.algorithm in ("query_proportional", "hybrid_attract"):
            scores = influence.influence_scores(member_ids + [template_id], template_id, scorer)
            attract = influence.build_table(scores, p=self.decay_p)
        elif self.algorithm == "hybrid_repel":
            scores = influence.influence_scores(member_ids, template_id, scorer)
            repel = influence.build_repel_table(scores, p=self.decay_p)
        return attract, repel

    def _initial_state(self, n: int) -> EntityState:
        if self.algorithm == "hybrid_repel":
            return EntityState.single_cluster(n)
        return EntityState.singletons(n)

    def _tracker(self, qn: QueryNode, working, template_id: int, state) -> F1Tracker | None:
        label = qn.mention.truth
        if label is None:
            return None
        relevant = {m.id for m in working if m.truth == label and m.id != template_id}
        if not relevant:
            return None
        return F1Tracker(template_id, relevant, state)

    def _config(self) -> SamplerConfig:
        return SamplerConfig(
            algorithm=self.algorithm,
            tau_alpha=self.tau_alpha,
            samples=self.samples,
            acceptance=self.acceptance,
            seed=self.seed,
            adaptive=self.adaptive,
            window=self.window,
            patience=self.patience,
        )

    # -- single query --------------------------------------------------------

    def resolve(
        self, qn: QueryNode, *, exhaustive: bool = False, engine: bool | None = None
    ) -> Resolution:
        """Resolve one query and return its entity with trace and timings.

        engine=None routes through the parallel engine only when
        workers > 1; pass True to force it (used for benchmarking)."""
        self._check_fitted()
        t_start = time.perf_counter()
        if exhaustive:
            member_ids = list(range(len(self.mentions_)))
            blocking_s = 0.0
        else:
            t0 = time.perf_counter()
            c = blocking.canopy(qn, self.index_, min_jaccard=self.min_jaccard)
            member_ids = c.members
            blocking_s = time.perf_counter() - t0
            if not member_ids:
                raise EmptyResultError(
                    f"no canopy matches for surface {qn.mention.surface!r}"
                )
        t0 = time.perf_counter()
        working, template_ids, scorer = self._working_set([qn], member_ids)
        template_id = template_ids[0]
        attract, repel = self._tables(scorer, list(range(len(member_ids))), template_id)
        table_s = time.perf_counter() - t0

        state = self._initial_state(len(working))
        tracker = self._tracker(qn, working, template_id, state)
        cfg = self._config()
        t0 = time.perf_counter()
        engine_stats = None
        worker_traces = None
        use_engine = engine if engine is not None else self.workers > 1
        if use_engine:
            result = self._run_engine(state, scorer, [template_id], [attract], [repel], [tracker])
            trace = result.traces[0]
            engine_stats = result.stats
            worker_traces = result.traces
        else:
            kernel = samplers.build_kernel(
                cfg, template_id=template_id, attract=attract, repel=repel
            )
            rng = np.random.default_rng(self.seed)
            trace = samplers.run_sampler(state, scorer, kernel, cfg, rng=rng, tracker=tracker)
        inference_s = time.perf_counter() - t0

        entity = sorted(state.members[state.entity_of(template_id)])
        corpus_ids = [member_ids[w] for w in entity if w != template_id]
        timings = {
            "blocking_s": blocking_s,
            "table_s": table_s,
            "inference_s": inference_s,
            "total_s": time.perf_counter() - t_start,
        }
        return Resolution(
            query=qn,
            mention_ids=corpus_ids,
            mentions=[self.mentions_[cid] for cid in corpus_ids],
            canopy_size=len(member_ids),
            trace=trace,
            timings=timings,
            state=state,
            engine_stats=engine_stats,
            worker_traces=worker_traces,
        )

    def _run_engine(self, state, scorer, template_ids, attracts, repels, trackers) -> EngineResult:
        cfg = self._config()

        def make_kernels(worker_id: int):
            return [
                samplers.build_kernel(
                    cfg, template_id=tid, attract=att, repel=rep
                )
                for tid, att, rep in zip(template_ids, attracts, repels)
            ]

        pcfg = ParallelConfig(
            workers=self.workers,
            samples=self.samples,
            tau_alpha=self.tau_alpha,
            acceptance=self.acceptance,
            seed=self.seed,
            contention=self.contention,
        )
        return run_parallel(
            state, scorer, make_kernels, pcfg, make_trackers=lambda: trackers
        )

    # -- watchlists ----------------------------------------------------------

    def resolve_watchlist(self, queries: list[QueryNode], *, budget: int | None = None) -> WatchlistResolution:
        """Resolve several queries over one shared working state."""
        self._check_fitted()
        t_start = time.perf_counter()
        t0 = time.perf_counter()
        canopies = []
        unresolved = []
        resolved: list[int] = []
        for i, qn in enumerate(queries):
            c = blocking.canopy(qn, self.index_, min_jaccard=self.min_jaccard)
            canopies.append(c.members)
            if c.members:
                resolved.append(i)
            else:
                unresolved.append(i)
        if not resolved:
            raise EmptyResultError("every watchlist query has an empty canopy")
        merged = sorted({cid for i in resolved for cid in canopies[i]})
        blocking_s = time.perf_counter() - t0

        t0 = time.perf_counter()
        live_queries = [queries[i] for i in resolved]
        working, template_ids, scorer = self._working_set(live_queries, merged)
        pos_of = {cid: w for w, cid in enumerate(merged)}
        state = self._initial_state(len(working))
        kernels = []
        trackers = []
        selectivities = []
        cfg = self._config()
        for qi, qn in enumerate(live_queries):
            tid = template_ids[qi]
            members = [pos_of[cid] for cid in canopies[resolved[qi]]]
            attract, repel = self._tables(scorer, members, tid)
            kernels.append(
                samplers.build_kernel(cfg, template_id=tid, attract=attract, repel=repel)
            )
            trackers.append(self._tracker(qn, working, tid, state))
            selectivities.append(len(members))
        table_s = time.perf_counter() - t0

        t0 = time.perf_counter()
        rng = np.random.default_rng(self.seed)
        result = scheduler.run_watchlist(
            state,
            scorer,
            kernels,
            trackers,
            selectivities,
            cfg,
            budget=budget if budget is not None else self.samples,
            policy=self.schedule,
            k_slice=self.k_slice,
            rng=rng,
        )
        inference_s = time.perf_counter() - t0

        entities: list[list[int] | None] = [None] * len(queries)
        for qi, i in enumerate(resolved):
            tid = template_ids[qi]
            entity = sorted(state.members[state.entity_of(tid)])
            entities[i] = [merged[w] for w in entity if w < len(merged)]
        timings = {
            "blocking_s": blocking_s,
            "table_s": table_s,
            "inference_s": inference_s,
            "total_s": time.perf_counter() - t_start,
        }
        return WatchlistResolution(
            queries=queries,
            entities=entities,
            unresolved=unresolved,
            result=result,
            timings=timings,
        )

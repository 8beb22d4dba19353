"""Query-driven collective entity resolution.

The pipeline: load a mention corpus, block it into a canopy around the
query, then run biased Metropolis-Hastings style sampling over the
entity partition until the query's entity stabilizes. QueryResolver
ties the stages together; the submodules stay usable on their own.
"""

from .blocking import Canopy, QGramIndex, approximate_match, build_index, canopy, grams
from .corpus import (
    CorpusStats,
    Mention,
    QueryNode,
    compute_stats,
    load_corpus,
    parse_query,
    save_corpus,
    tokenize,
)
from .engine import EngineResult, ParallelConfig, run_parallel, worker_rng
from .errors import ConfigError, ContractError, CorpusFormatError, EmptyResultError
from .estimator import QueryResolver, Resolution, WatchlistResolution
from .evaluation import F1Report, F1Tracker, average_runs, f1_q, run_experiment
from .features import (
    FeatureModel,
    FeatureSpec,
    Scorer,
    default_model,
    dump_weights,
    entity_score,
    load_weights,
    pairwise_score,
)
from .influence import (
    VoseTable,
    build_repel_table,
    build_table,
    decay_masses,
    influence_canopy_threshold,
    influence_scores,
)
from .samplers import (
    ALGORITHMS,
    RunTrace,
    SamplerConfig,
    baseline_er,
    build_kernel,
    hybrid_attract,
    hybrid_repel,
    query_proportional,
    run_sampler,
    target_fixed,
)
from .scheduler import POLICIES, WatchlistResult, next_query, run_watchlist
from .state import FRESH, EntityState, Move, accept

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "Canopy",
    "ConfigError",
    "ContractError",
    "CorpusFormatError",
    "CorpusStats",
    "EmptyResultError",
    "EngineResult",
    "EntityState",
    "F1Report",
    "F1Tracker",
    "FeatureModel",
    "FeatureSpec",
    "FRESH",
    "Mention",
    "Move",
    "ParallelConfig",
    "POLICIES",
    "QGramIndex",
    "QueryNode",
    "QueryResolver",
    "Resolution",
    "RunTrace",
    "SamplerConfig",
    "Scorer",
    "VoseTable",
    "WatchlistResolution",
    "WatchlistResult",
    "accept",
    "approximate_match",
    "average_runs",
    "baseline_er",
    "build_index",
    "build_kernel",
    "build_repel_table",
    "build_table",
    "canopy",
    "compute_stats",
    "decay_masses",
    "default_model",
    "dump_weights",
    "entity_score",
    "f1_q",
    "grams",
    "hybrid_attract",
    "hybrid_repel",
    "influence_canopy_threshold",
    "influence_scores",
    "load_corpus",
    "load_weights",
    "next_query",
    "pairwise_score",
    "parse_query",
    "query_proportional",
    "run_experiment",
    "run_parallel",
    "run_sampler",
    "run_watchlist",
    "save_corpus",
    "target_fixed",
    "tokenize",
    "worker_rng",
]

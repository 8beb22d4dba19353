"""Slice scheduling across a watchlist of queries over one shared state.

Each query gets its own kernel and acceptance window; the scheduler
hands out fixed-size slices of proposals, one query at a time, until
the budget runs out or every query converges. A query converges when
its window has seen no acceptance for `patience` consecutive full
windows. The four policies differ only in how the next query is picked;
none of them consumes randomness, so runs are reproducible from the
sampler seed alone.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .features import Scorer
from .samplers import SamplerConfig, one_step
from .state import EntityState

POLICIES = ("random", "selectivity", "closest_first", "farthest_first")


@dataclass
class QuerySchedule:
    """Per-query bookkeeping: acceptance ring plus convergence state."""

    index: int
    selectivity: int
    window: int = 100
    patience: int = 5
    ring: deque = field(default_factory=deque)
    ring_hits: int = 0
    consumed: int = 0
    slices_received: int = 0
    window_fill: int = 0
    window_hits: int = 0
    quiet_windows: int = 0
    converged: bool = False

    def record(self, accepted: bool) -> None:
        if len(self.ring) == self.window:
            self.ring_hits -= self.ring.popleft()
        self.ring.append(1 if accepted else 0)
        self.ring_hits += 1 if accepted else 0
        self.consumed += 1
        self.window_fill += 1
        if accepted:
            self.window_hits += 1
        if self.window_fill == self.window:
            if self.window_hits == 0:
                self.quiet_windows += 1
                if self.quiet_windows >= self.patience:
                    self.converged = True
            else:
                self.quiet_windows = 0
            self.window_fill = 0
            self.window_hits = 0

    def acceptance_fraction(self) -> float:
        return self.ring_hits / len(self.ring) if self.ring else 0.0


class FanOutTracker:
    """Forward accepted moves to every query's tracker.

    Any query's accepted move can touch any entity of the shared state,
    so all trackers must observe all moves, not just the slice owner's.
    """

    def __init__(self, trackers):
        self.trackers = [t for t in trackers if t is not None]

    def on_accept(self, move, target) -> None:
        for t in self.trackers:
            t.on_accept(move, target)


def _live(schedules: list[QuerySchedule]) -> list[QuerySchedule]:
    live = [s for s in schedules if not s.converged]
    if not live:
        raise ContractError("all queries have converged")
    return live


def next_query_random(schedules: list[QuerySchedule], last_pick: int) -> int:
    """Round-robin over unconverged queries, starting after last_pick."""
    n = len(schedules)
    _live(schedules)
    for off in range(1, n + 1):
        i = (last_pick + off) % n
        if not schedules[i].converged:
            return i
    raise ContractError("all queries have converged")


def next_query_selectivity(schedules: list[QuerySchedule], slices_issued: int) -> int:
    """Largest allocation deficit, shares proportional to selectivity.

    The allocation is fixed up front. Shares never renormalize when a
    query converges, so a converged query keeps drawing its slices; the
    run only stops once every query has converged or the budget is gone.
    """
    _live(schedules)
    total = sum(s.selectivity for s in schedules)
    if total <= 0:
        return min(s.index for s in schedules)
    best = max(
        schedules,
        key=lambda s: (s.selectivity / total * slices_issued - s.slices_received, -s.index),
    )
    return best.index


def next_query_closest_first(schedules: list[QuerySchedule], last_pick: int) -> int:
    """Lowest positive acceptance fraction; round-robin when all zero."""
    live = _live(schedules)
    positive = [s for s in live if s.acceptance_fraction() > 0.0]
    if not positive:
        return next_query_random(schedules, last_pick)
    best = min(positive, key=lambda s: (s.acceptance_fraction(), s.index))
    return best.index


def next_query_farthest_first(schedules: list[QuerySchedule], last_pick: int) -> int:
    """Highest acceptance fraction, ties by query index."""
    live = _live(schedules)
    best = max(live, key=lambda s: (s.acceptance_fraction(), -s.index))
    return best.index


def next_query(policy: str, schedules, *, last_pick: int, slices_issued: int) -> int:
    if policy == "random":
        return next_query_random(schedules, last_pick)
    if policy == "selectivity":
        return next_query_selectivity(schedules, slices_issued)
    if policy == "closest_first":
        return next_query_closest_first(schedules, last_pick)
    if policy == "farthest_first":
        return next_query_farthest_first(schedules, last_pick)
    raise ConfigError(f"unknown scheduling policy {policy!r}")


@dataclass
class WatchlistResult:
    """Aggregate trace sampled at slice boundaries plus final bookkeeping."""

    cumulative: np.ndarray
    mean_f1: np.ndarray
    per_query: np.ndarray
    schedules: list[QuerySchedule]
    total_proposals: int = 0

    def final_mean_f1(self) -> float:
        return float(self.mean_f1[-1]) if len(self.mean_f1) else float("nan")

    def mean_f1_at(self, budget: int) -> float:
        """Mean f1 at the last slice boundary not past the given budget."""
        idx = np.searchsorted(self.cumulative, budget, side="right") - 1
        return float(self.mean_f1[idx]) if idx >= 0 else float("nan")

    def peak_budget(self) -> int | None:
        """Cumulative proposals at the first maximum of mean f1."""
        if not len(self.mean_f1):
            return None
        return int(self.cumulative[int(np.argmax(self.mean_f1))])

    def to_csv(self, path) -> None:
        n_q = self.per_query.shape[1] if self.per_query.size else len(self.schedules)
        header = ["cumulative_proposals", "mean_f1_q"] + [f"f1_q_{i}" for i in range(n_q)]
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in range(len(self.cumulative)):
                cells = [str(int(self.cumulative[row])), f"{self.mean_f1[row]:.6f}"]
                cells += [f"{v:.6f}" for v in self.per_query[row]]
                fh.write(",".join(cells) + "\n")


def run_watchlist(
    state: EntityState,
    scorer: Scorer,
    kernels: list,
    trackers: list,
    selectivities: list[int],
    cfg: SamplerConfig,
    *,
    budget: int,
    policy: str = "random",
    k_slice: int = 500,
    rng: np.random.Generator | None = None,
) -> WatchlistResult:
    """Interleave per-query sampling slices over the shared state.

    kernels and trackers are parallel lists, one per query (a tracker
    may be None when the query has no gold label). The final slice is
    truncated so consumed proposals equal the budget exactly; the run
    ends early if every query converges first.
    """
    if policy not in POLICIES:
        raise ConfigError(f"unknown scheduling policy {policy!r}")
    if k_slice < 1:
        raise ConfigError("k_slice must be positive")
    if len(kernels) != len(trackers) or len(kernels) != len(selectivities):
        raise ContractError("kernels, trackers, selectivities must align")
    if not kernels:
        raise ContractError("watchlist is empty")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    schedules = [
        QuerySchedule(
            index=i,
            selectivity=selectivities[i],
            window=cfg.window,
            patience=cfg.patience,
        )
        for i in range(len(kernels))
    ]
    fan_out = FanOutTracker(trackers)
    cumulative: list[int] = []
    mean_rows: list[float] = []
    query_rows: list[list[float]] = []
    consumed = 0
    last_pick = -1
    slices_issued = 0
    while consumed < budget and any(not s.converged for s in schedules):
        i = next_query(policy, schedules, last_pick=last_pick, slices_issued=slices_issued)
        sched = schedules[i]
        size = min(k_slice, budget - consumed)
        for _ in range(size):
            ok, _, _ = one_step(state, scorer, kernels[i], cfg.acceptance, rng, fan_out)
            sched.record(ok)
        consumed += size
        sched.slices_received += 1
        slices_issued += 1
        last_pick = i
        f1s = [t.value() if t is not None else float("nan") for t in trackers]
        cumulative.append(consumed)
        query_rows.append(f1s)
        mean_rows.append(float(np.nanmean(f1s)) if any(not np.isnan(v) for v in f1s) else float("nan"))
    return WatchlistResult(
        cumulative=np.asarray(cumulative, dtype=np.int64),
        mean_f1=np.asarray(mean_rows, dtype=np.float64),
        per_query=np.asarray(query_rows, dtype=np.float64) if query_rows else np.empty((0, len(kernels))),
        schedules=schedules,
        total_proposals=consumed,
    )

"""Shared-state parallel sampling with per-entity striped locking.

Workers draw proposals optimistically (no locks held), then try to
acquire the lock stripes covering the two entities involved, in stripe
order, without blocking. On failure the step is spent per the
contention policy: dropped and resampled next step, or retried once as
a baseline proposal. Validation, scoring, and acceptance happen with
the stripes held, so every accepted move is computed against current
memberships; a single registry lock additionally serializes structural
mutation (entity creation and removal) and tracker updates.

Worker 0's random stream is the plain seeded stream, so a single-worker
run is bit-identical to the sequential sampler. Other workers derive
independent streams from the same master seed.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .features import Scorer
from .samplers import BaselineKernel, RunTrace
from .state import FRESH, EntityState, accept

CONTENTION_POLICIES = ("resample", "baseline_fallback")

# Optimistic reads can observe mid-mutation structures; these are the
# benign failure shapes, caught and counted as contention.
_STALE_ERRORS = (KeyError, IndexError, ValueError)

STAT_KEYS = (
    "proposals",
    "accepted",
    "noops",
    "lock_failures",
    "stale",
    "fallbacks",
    "fallback_failures",
    "version_races",
)


@dataclass(frozen=True)
class ParallelConfig:
    workers: int = 1
    samples: int = 1000
    tau_alpha: float = 1.0
    acceptance: str = "greedy"
    seed: int = 0
    contention: str = "resample"
    stripes: int = 64

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.samples < 0:
            raise ConfigError("samples must be non-negative")
        if not 0.0 <= self.tau_alpha <= 1.0:
            raise ConfigError("tau_alpha must be in [0, 1]")
        if self.contention not in CONTENTION_POLICIES:
            raise ConfigError(f"unknown contention policy {self.contention!r}")
        if self.acceptance not in ("greedy", "metropolis"):
            raise ConfigError(f"unknown acceptance mode {self.acceptance!r}")
        if self.stripes < 1:
            raise ConfigError("stripes must be positive")


@dataclass
class EngineResult:
    state: EntityState
    traces: list[RunTrace]
    stats: dict

    @property
    def total_proposals(self) -> int:
        return self.stats["proposals"]


def worker_rng(seed: int, worker: int) -> np.random.Generator:
    """Worker 0 reproduces the sequential stream; others are spawned."""
    if worker == 0:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(worker,)))


class _Stripes:
    def __init__(self, n: int):
        self.locks = [threading.Lock() for _ in range(n)]
        self.n = n

    def covering(self, move) -> list[threading.Lock]:
        idx = {move.source % self.n}
        if move.target != FRESH:
            idx.add(move.target % self.n)
        return [self.locks[i] for i in sorted(idx)]

    def try_acquire(self, needed: list[threading.Lock]) -> bool:
        held = []
        for lock in needed:
            if lock.acquire(blocking=False):
                held.append(lock)
            else:
                for h in held:
                    h.release()
                return False
        return True

    @staticmethod
    def release(held: list[threading.Lock]) -> None:
        for lock in held:
            lock.release()


def _validate(state: EntityState, move) -> bool:
    try:
        if state.entity_of(move.mention) != move.source:
            return False
        if move.target == FRESH:
            return len(state.members[move.source]) > 1
        return move.target in state.members and move.target != move.source
    except _STALE_ERRORS:
        return False


def _worker_loop(
    worker_id: int,
    state: EntityState,
    scorer: Scorer,
    kernels: list,
    trackers: list,
    cfg: ParallelConfig,
    stripes: _Stripes,
    registry: threading.Lock,
    out: dict,
):
    rng = worker_rng(cfg.seed, worker_id)
    fallback = BaselineKernel()
    n = cfg.samples
    accepted = np.zeros(n, dtype=np.uint8)
    deltas = np.zeros(n, dtype=np.float64)
    f1s = np.full(n, np.nan)
    stats = dict.fromkeys(STAT_KEYS, 0)
    stats["proposals"] = n
    n_queries = len(kernels)
    for i in range(n):
        if n_queries > 1:
            qi = int(rng.integers(n_queries))
        else:
            qi = 0
        kernel = kernels[qi]
        tracker = trackers[qi]
        try:
            proposal = kernel.propose(state, rng)
        except _STALE_ERRORS:
            stats["stale"] += 1
            continue
        if proposal is None:
            stats["noops"] += 1
            if tracker is not None:
                f1s[i] = tracker.value()
            continue
        needed = stripes.covering(proposal.move)
        if not stripes.try_acquire(needed):
            stats["lock_failures"] += 1
            if cfg.contention == "baseline_fallback":
                stats["fallbacks"] += 1
                proposal, needed = _baseline_retry(state, rng, fallback, stripes, stats)
                if proposal is None:
                    continue
            else:
                continue
        # Stripes held from here: memberships of both entities are stable.
        try:
            move = proposal.move
            if not _validate(state, move):
                stats["stale"] += 1
                continue
            versions_before = (
                state.versions[move.source],
                state.versions.get(move.target),
            )
            target_members = [] if move.target == FRESH else state.members[move.target]
            delta = scorer.move_delta(move.mention, state.members[move.source], target_members)
            if versions_before != (
                state.versions.get(move.source),
                state.versions.get(move.target),
            ):
                stats["version_races"] += 1
                continue
            deltas[i] = delta
            if accept(delta, cfg.acceptance, rng, proposal.log_t_ratio):
                with registry:
                    target = state.apply_move(move)
                    for t in trackers:
                        if t is not None:
                            t.on_accept(move, target)
                accepted[i] = 1
                stats["accepted"] += 1
        finally:
            stripes.release(needed)
        if tracker is not None:
            f1s[i] = tracker.value()
    biased = sum(getattr(k, "biased", 0) for k in kernels)
    proposals = sum(getattr(k, "proposals", 0) for k in kernels)
    out["trace"] = RunTrace(
        accepted=accepted,
        delta=deltas,
        f1=f1s,
        final_state=state,
        n_noops=stats["noops"],
        biased=biased,
        proposals=proposals,
    )
    out["stats"] = stats


def _baseline_retry(state, rng, fallback, stripes, stats):
    """One baseline proposal after contention; may itself fail to lock."""
    try:
        proposal = fallback.propose(state, rng)
    except _STALE_ERRORS:
        stats["stale"] += 1
        return None, []
    if proposal is None:
        stats["noops"] += 1
        return None, []
    needed = stripes.covering(proposal.move)
    if not stripes.try_acquire(needed):
        stats["fallback_failures"] += 1
        return None, []
    return proposal, needed


def run_parallel(
    state: EntityState,
    scorer: Scorer,
    make_kernels,
    cfg: ParallelConfig,
    *,
    make_trackers=None,
) -> EngineResult:
    """Run cfg.workers workers for cfg.samples proposals each.

    make_kernels(worker_id) returns that worker's per-query kernel list
    (kernels hold mutable counters, so each worker gets its own; the
    underlying tables are shared). make_trackers() returns per-query
    trackers shared by all workers, or None.
    """
    stripes = _Stripes(cfg.stripes)
    registry = threading.Lock()
    trackers = make_trackers() if make_trackers is not None else None
    outs = [{} for _ in range(cfg.workers)]

    def launch(worker_id: int):
        kernels = make_kernels(worker_id)
        local_trackers = trackers if trackers is not None else [None] * len(kernels)
        _worker_loop(
            worker_id, state, scorer, kernels, local_trackers, cfg, stripes, registry,
            outs[worker_id],
        )

    if cfg.workers == 1:
        launch(0)
    else:
        threads = [
            threading.Thread(target=launch, args=(w,), name=f"sampler-{w}")
            for w in range(cfg.workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    failed = [w for w, out in enumerate(outs) if "trace" not in out]
    if failed:
        raise RuntimeError(f"workers {failed} died before finishing; partial traces kept")
    totals = dict.fromkeys(STAT_KEYS, 0)
    for out in outs:
        for key in STAT_KEYS:
            totals[key] += out["stats"][key]
    return EngineResult(state=state, traces=[out["trace"] for out in outs], stats=totals)

"""Proposal kernels and the sampling loop.

All kernels emit single-mention moves; the shared driver scores each
move incrementally, applies the acceptance rule, and records a trace.
The baseline kernel carries a proposal-ratio term so metropolis runs
target the model distribution exactly; the query-biased kernels are
search heuristics and omit it.

Degenerate draws (move onto itself, singleton to a fresh entity) are
counted as rejected steps so budgets stay exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .features import Scorer
from .influence import VoseTable
from .state import FRESH, EntityState, Move, accept

ALGORITHMS = (
    "baseline",
    "target_fixed",
    "query_proportional",
    "hybrid_attract",
    "hybrid_repel",
)
ACCEPTANCE_MODES = ("greedy", "metropolis")

# Bounded retries for degenerate draws where the contract asks for a
# redraw (query_proportional's m2); afterwards the step counts rejected.
MAX_RETRIES = 8


@dataclass(frozen=True)
class SamplerConfig:
    algorithm: str = "baseline"
    tau_alpha: float = 0.9
    samples: int = 1000
    acceptance: str = "greedy"
    seed: int = 0
    adaptive: bool = False
    window: int = 100
    patience: int = 5

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.acceptance not in ACCEPTANCE_MODES:
            raise ConfigError(f"unknown acceptance mode {self.acceptance!r}")
        if not 0.0 <= self.tau_alpha <= 1.0:
            raise ConfigError("tau_alpha must be in [0, 1]")
        if self.samples < 0:
            raise ConfigError("samples must be non-negative")
        if self.window < 1 or self.patience < 1:
            raise ConfigError("window and patience must be positive")


@dataclass(frozen=True)
class Proposal:
    move: Move
    log_t_ratio: float = 0.0


@dataclass
class RunTrace:
    """Per-step records of one sampling run."""

    accepted: np.ndarray
    delta: np.ndarray
    f1: np.ndarray
    final_state: EntityState
    n_noops: int = 0
    biased: int = 0
    proposals: int = 0

    def __len__(self) -> int:
        return len(self.accepted)

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())

    @property
    def biased_fraction(self) -> float:
        return self.biased / self.proposals if self.proposals else 0.0

    def steps_to(self, threshold: float) -> int | None:
        """Proposals consumed before f1 first reaches threshold."""
        hits = np.nonzero(self.f1 >= threshold)[0]
        return int(hits[0]) + 1 if len(hits) else None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "accepted", "delta", "f1_q"])
            for i in range(len(self.accepted)):
                f1 = "" if math.isnan(self.f1[i]) else f"{self.f1[i]:.6f}"
                writer.writerow([i + 1, int(self.accepted[i]), f"{self.delta[i]:.6f}", f1])


def _coin(rng: np.random.Generator, tau: float) -> bool:
    # tau of exactly 0 or 1 consumes no randomness; keeps the branch
    # structure testable and the parallel tau=1 path deterministic.
    if tau >= 1.0:
        return True
    if tau <= 0.0:
        return False
    return rng.random() < tau


def _uniform_from(rng: np.random.Generator, items: list[int]) -> int:
    return items[int(rng.integers(len(items)))]


def _other_entity(state: EntityState, rng: np.random.Generator, excluded: int) -> int:
    """Uniform entity id != excluded; caller guarantees one exists."""
    ids = state.entity_ids
    pick = ids[int(rng.integers(len(ids) - 1))]
    return ids[-1] if pick == excluded else pick


def _uniform_move(state: EntityState, rng: np.random.Generator) -> Proposal | None:
    """Unconstrained move: target uniform over entities plus a fresh one,
    source uniform over the remaining entities, mention uniform."""
    k = len(state.entity_ids)
    slot = int(rng.integers(k + 1))
    tgt = FRESH if slot == k else state.entity_ids[slot]
    if tgt == FRESH:
        src = state.entity_ids[int(rng.integers(k))]
    else:
        if k < 2:
            return None
        src = _other_entity(state, rng, tgt)
    members = state.members[src]
    m = _uniform_from(rng, members)
    if tgt == FRESH and len(members) == 1:
        return None
    return Proposal(Move(m, src, tgt))


class BaselineKernel:
    """Entity-first uniform moves with an exact proposal-ratio term.

    Forward probability of a concrete move is 1/(k (k+1) |src|): source
    entity, target slot among k entities plus fresh, then the mention.
    The reverse move sees the post-move entity count and target size, so
    the ratio is carried on the proposal for metropolis acceptance.
    """

    name = "baseline"

    def __init__(self):
        self.proposals = 0
        self.biased = 0

    def propose(self, state: EntityState, rng: np.random.Generator) -> Proposal | None:
        self.proposals += 1
        k = len(state.entity_ids)
        src = state.entity_ids[int(rng.integers(k))]
        slot = int(rng.integers(k + 1))
        tgt = FRESH if slot == k else state.entity_ids[slot]
        members = state.members[src]
        m = _uniform_from(rng, members)
        size_src = len(members)
        if tgt == src or (tgt == FRESH and size_src == 1):
            return None
        if tgt == FRESH:
            k_after = k + 1
            size_tgt_after = 1
        else:
            k_after = k - 1 if size_src == 1 else k
            size_tgt_after = len(state.members[tgt]) + 1
        log_t = math.log(k * (k + 1) * size_src) - math.log(
            k_after * (k_after + 1) * size_tgt_after
        )
        return Proposal(Move(m, src, tgt), log_t)


class TargetFixedKernel:
    """Biased branch pulls a uniform outside mention into the query
    entity; the back-out branch moves a mention anywhere else."""

    name = "target_fixed"

    def __init__(self, template_id: int, tau: float):
        self.template_id = template_id
        self.tau = tau
        self.proposals = 0
        self.biased = 0

    def propose(self, state: EntityState, rng: np.random.Generator) -> Proposal | None:
        self.proposals += 1
        k = len(state.entity_ids)
        query_entity = state.entity_of(self.template_id)
        if _coin(rng, self.tau):
            self.biased += 1
            if k < 2:
                return None
            src = _other_entity(state, rng, query_entity)
            m = _uniform_from(rng, state.members[src])
            return Proposal(Move(m, src, query_entity))
        # Back-out: target is never the query entity; its slot stands in
        # for a fresh entity instead.
        slot = int(rng.integers(k))
        tgt = state.entity_ids[slot]
        if tgt == query_entity:
            tgt = FRESH
        if tgt == FRESH:
            src = state.entity_ids[int(rng.integers(k))]
        else:
            src = _other_entity(state, rng, tgt)
        members = state.members[src]
        m = _uniform_from(rng, members)
        if tgt == FRESH and len(members) == 1:
            return None
        return Proposal(Move(m, src, tgt))


class QueryProportionalKernel:
    """Both endpoints drawn from the attract table: m1 moves into m2's
    entity, so query-like mentions cluster among themselves."""

    name = "query_proportional"

    def __init__(self, table: VoseTable):
        self.table = table
        self.proposals = 0
        self.biased = 0

    def propose(self, state: EntityState, rng: np.random.Generator) -> Proposal | None:
        self.proposals += 1
        m1 = self.table.draw(rng)
        m2 = self.table.draw(rng)
        retries = 0
        while m2 == m1 and retries < MAX_RETRIES:
            m2 = self.table.draw(rng)
            retries += 1
        if m1 == m2:
            return None
        src = state.entity_of(m1)
        tgt = state.entity_of(m2)
        if src == tgt:
            return None
        return Proposal(Move(m1, src, tgt))


class HybridAttractKernel:
    """Attract-biased source with a fixed query-entity target; the
    back-out branch is an unconstrained uniform move."""

    name = "hybrid_attract"

    def __init__(self, template_id: int, table: VoseTable, tau: float):
        self.template_id = template_id
        self.table = table
        self.tau = tau
        self.proposals = 0
        self.biased = 0

    def propose(self, state: EntityState, rng: np.random.Generator) -> Proposal | None:
        self.proposals += 1
        if _coin(rng, self.tau):
            self.biased += 1
            query_entity = state.entity_of(self.template_id)
            m = self.table.draw(rng)
            src = state.entity_of(m)
            if src == query_entity:
                return None
            return Proposal(Move(m, src, query_entity))
        return _uniform_move(state, rng)


class HybridRepelKernel:
    """Repel-biased eviction from a merged start: the drawn mention is
    pushed to some entity other than the query entity (fresh when only
    the query entity exists); back-out is an unconstrained move."""

    name = "hybrid_repel"

    def __init__(self, template_id: int, table: VoseTable, tau: float):
        self.template_id = template_id
        self.table = table
        self.tau = tau
        self.proposals = 0
        self.biased = 0

    def propose(self, state: EntityState, rng: np.random.Generator) -> Proposal | None:
        self.proposals += 1
        if _coin(rng, self.tau):
            self.biased += 1
            query_entity = state.entity_of(self.template_id)
            m = self.table.draw(rng)
            src = state.entity_of(m)
            slot = int(rng.integers(len(state.entity_ids)))
            tgt = state.entity_ids[slot]
            if tgt == query_entity:
                tgt = FRESH
            if tgt == src or (tgt == FRESH and len(state.members[src]) == 1):
                return None
            return Proposal(Move(m, src, tgt))
        return _uniform_move(state, rng)


def build_kernel(
    cfg: SamplerConfig,
    *,
    template_id: int | None = None,
    attract: VoseTable | None = None,
    repel: VoseTable | None = None,
):
    """Kernel instance for cfg.algorithm, checking required inputs."""
    name = cfg.algorithm
    if name == "baseline":
        return BaselineKernel()
    if template_id is None:
        raise ConfigError(f"{name} requires a query template mention")
    if name == "target_fixed":
        return TargetFixedKernel(template_id, cfg.tau_alpha)
    if name == "query_proportional":
        if attract is None:
            raise ConfigError("query_proportional requires an attract table")
        return QueryProportionalKernel(attract)
    if name == "hybrid_attract":
        if attract is None:
            raise ConfigError("hybrid_attract requires an attract table")
        return HybridAttractKernel(template_id, attract, cfg.tau_alpha)
    if name == "hybrid_repel":
        if repel is None:
            raise ConfigError("hybrid_repel requires a repel table")
        return HybridRepelKernel(template_id, repel, cfg.tau_alpha)
    raise ConfigError(f"unknown algorithm {name!r}")


def one_step(
    state: EntityState,
    scorer: Scorer,
    kernel,
    acceptance: str,
    rng: np.random.Generator,
    tracker=None,
) -> tuple[bool, float, bool]:
    """One propose/score/accept cycle. Returns (accepted, delta, noop)."""
    proposal = kernel.propose(state, rng)
    if proposal is None:
        return False, 0.0, True
    move = proposal.move
    target_members = [] if move.target == FRESH else state.members[move.target]
    delta = scorer.move_delta(move.mention, state.members[move.source], target_members)
    if accept(delta, acceptance, rng, proposal.log_t_ratio):
        target = state.apply_move(move)
        if tracker is not None:
            tracker.on_accept(move, target)
        return True, delta, False
    return False, delta, False


def run_sampler(
    state: EntityState,
    scorer: Scorer,
    kernel,
    cfg: SamplerConfig,
    *,
    rng: np.random.Generator | None = None,
    tracker=None,
) -> RunTrace:
    """Drive kernel for cfg.samples steps, mutating state in place.

    tracker, when given, must expose value() and on_accept(move, target)
    and is consulted after every step for the f1 column. With
    cfg.adaptive the run stops early after cfg.patience consecutive
    windows of cfg.window steps without a single acceptance.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = cfg.samples
    accepted = np.zeros(n, dtype=np.uint8)
    deltas = np.zeros(n, dtype=np.float64)
    f1s = np.full(n, np.nan)
    n_noops = 0
    window_hits = 0
    quiet_windows = 0
    done = 0
    for i in range(n):
        ok, delta, noop = one_step(state, scorer, kernel, cfg.acceptance, rng, tracker)
        deltas[i] = delta
        if noop:
            n_noops += 1
        if ok:
            accepted[i] = 1
            window_hits += 1
        if tracker is not None:
            f1s[i] = tracker.value()
        done = i + 1
        if cfg.adaptive and done % cfg.window == 0:
            if window_hits == 0:
                quiet_windows += 1
                if quiet_windows >= cfg.patience:
                    break
            else:
                quiet_windows = 0
            window_hits = 0
    return RunTrace(
        accepted=accepted[:done],
        delta=deltas[:done],
        f1=f1s[:done],
        final_state=state,
        n_noops=n_noops,
        biased=kernel.biased,
        proposals=kernel.proposals,
    )


def baseline_er(state, scorer, cfg, *, rng=None, tracker=None):
    trace = run_sampler(state, scorer, BaselineKernel(), cfg, rng=rng, tracker=tracker)
    return state, trace


def target_fixed(state, scorer, template_id, cfg, *, rng=None, tracker=None):
    kernel = TargetFixedKernel(template_id, cfg.tau_alpha)
    trace = run_sampler(state, scorer, kernel, cfg, rng=rng, tracker=tracker)
    return state, trace


def query_proportional(state, scorer, table, cfg, *, rng=None, tracker=None):
    trace = run_sampler(state, scorer, QueryProportionalKernel(table), cfg, rng=rng, tracker=tracker)
    return state, trace


def hybrid_attract(state, scorer, template_id, table, cfg, *, rng=None, tracker=None):
    kernel = HybridAttractKernel(template_id, table, cfg.tau_alpha)
    trace = run_sampler(state, scorer, kernel, cfg, rng=rng, tracker=tracker)
    return state, trace


def hybrid_repel(state, scorer, template_id, table, cfg, *, rng=None, tracker=None):
    kernel = HybridRepelKernel(template_id, table, cfg.tau_alpha)
    trace = run_sampler(state, scorer, kernel, cfg, rng=rng, tracker=tracker)
    return state, trace

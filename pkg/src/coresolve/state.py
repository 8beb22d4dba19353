"""Mutable entity partition state and the move acceptance rule.

Entities are disjoint mention sets; every mention belongs to exactly one.
Member lists use swap-removal so single-mention moves, uniform entity
draws, and uniform member draws are all O(1). Fresh entity ids come from
a counter and are never reused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import ContractError

FRESH = -1


@dataclass(frozen=True)
class Move:
    """Relocate one mention from its source entity to a target entity.

    target may be FRESH (-1), meaning a new empty entity allocated at
    apply time.
    """

    mention: int
    source: int
    target: int


class EntityState:
    """A partition of working mention ids into entities."""

    def __init__(self, n_mentions: int):
        self.n_mentions = n_mentions
        self.assignment: list[int] = [0] * n_mentions
        self.position: list[int] = [0] * n_mentions
        self.members: dict[int, list[int]] = {}
        self.entity_ids: list[int] = []
        self._entity_pos: dict[int, int] = {}
        self.versions: dict[int, int] = {}
        self.next_entity_id = 0

    # -- construction -------------------------------------------------------

    @classmethod
    def singletons(cls, n_mentions: int) -> "EntityState":
        state = cls(n_mentions)
        for m in range(n_mentions):
            state._add_entity(m, [m])
        state.next_entity_id = n_mentions
        return state

    @classmethod
    def single_cluster(cls, n_mentions: int) -> "EntityState":
        state = cls(n_mentions)
        if n_mentions:
            state._add_entity(0, list(range(n_mentions)))
        state.next_entity_id = 1
        return state

    @classmethod
    def from_partition(cls, groups: Iterable[Iterable[int]], n_mentions: int) -> "EntityState":
        state = cls(n_mentions)
        seen = 0
        for eid, group in enumerate(groups):
            ids = list(group)
            state._add_entity(eid, ids)
            seen += len(ids)
        if seen != n_mentions:
            raise ContractError("partition does not cover all mentions exactly once")
        state.next_entity_id = len(state.entity_ids)
        return state

    def _add_entity(self, eid: int, ids: list[int]) -> None:
        self.members[eid] = ids
        self._entity_pos[eid] = len(self.entity_ids)
        self.entity_ids.append(eid)
        self.versions[eid] = 0
        for pos, m in enumerate(ids):
            self.assignment[m] = eid
            self.position[m] = pos

    # -- queries --------------------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    def entity_of(self, mention: int) -> int:
        return self.assignment[mention]

    def size(self, eid: int) -> int:
        return len(self.members[eid])

    def partition(self) -> list[list[int]]:
        return [sorted(ms) for ms in self.members.values()]

    def partition_key(self) -> tuple:
        """Canonical hashable key: entities relabeled in first-member order."""
        labels: dict[int, int] = {}
        out = []
        for m in range(self.n_mentions):
            eid = self.assignment[m]
            label = labels.get(eid)
            if label is None:
                label = len(labels)
                labels[eid] = label
            out.append(label)
        return tuple(out)

    # -- mutation ---------------------------------------------------------------

    def apply_move(self, move: Move) -> int:
        """Apply a move, returning the concrete target entity id.

        A move whose target equals its source is a no-op. Emptied source
        entities are dropped; FRESH targets allocate a new entity id.
        """
        m = move.mention
        src = move.source
        if self.assignment[m] != src:
            raise ContractError(f"mention {m} is not in entity {src}")
        tgt = move.target
        if tgt == src:
            return src
        if tgt != FRESH and tgt not in self.members:
            raise ContractError(f"target entity {tgt} does not exist")

        src_list = self.members[src]
        pos = self.position[m]
        last = src_list[-1]
        src_list[pos] = last
        self.position[last] = pos
        src_list.pop()
        if src_list:
            self.versions[src] += 1
        else:
            self._drop_entity(src)

        if tgt == FRESH:
            tgt = self.next_entity_id
            self.next_entity_id += 1
            self.members[tgt] = []
            self._entity_pos[tgt] = len(self.entity_ids)
            self.entity_ids.append(tgt)
            self.versions[tgt] = 0
        tgt_list = self.members[tgt]
        self.position[m] = len(tgt_list)
        tgt_list.append(m)
        self.assignment[m] = tgt
        self.versions[tgt] += 1
        return tgt

    def _drop_entity(self, eid: int) -> None:
        pos = self._entity_pos.pop(eid)
        last = self.entity_ids[-1]
        self.entity_ids[pos] = last
        if last != eid:
            self._entity_pos[last] = pos
        self.entity_ids.pop()
        del self.members[eid]
        del self.versions[eid]

    # -- integrity ---------------------------------------------------------------

    def validate(self) -> None:
        """Raise if the partition invariants are violated."""
        seen = set()
        for eid, ms in self.members.items():
            if not ms:
                raise ContractError(f"entity {eid} is empty")
            for pos, m in enumerate(ms):
                if m in seen:
                    raise ContractError(f"mention {m} appears in two entities")
                seen.add(m)
                if self.assignment[m] != eid or self.position[m] != pos:
                    raise ContractError(f"mention {m} has inconsistent bookkeeping")
        if len(seen) != self.n_mentions:
            raise ContractError("partition does not cover every mention")
        if sorted(self.entity_ids) != sorted(self.members):
            raise ContractError("entity registry out of sync")


def accept(delta: float, mode: str, rng, log_t_ratio: float = 0.0) -> bool:
    """Decide a proposal. Greedy accepts strict improvements only;
    metropolis accepts with probability min(1, exp(delta + log_t_ratio)),
    where the ratio term defaults to 0 for symmetric proposals."""
    if mode == "greedy":
        return delta > 0.0
    if mode == "metropolis":
        x = delta + log_t_ratio
        if x >= 0.0:
            return True
        return rng.random() < math.exp(x)
    raise ContractError(f"unknown acceptance mode {mode!r}")

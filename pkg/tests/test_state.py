"""Partition state: construction, moves, invariants, acceptance rule."""

import math

import numpy as np
import pytest

from coresolve.errors import ContractError
from coresolve.state import FRESH, EntityState, Move, accept


def test_singletons():
    state = EntityState.singletons(4)
    assert state.n_entities == 4
    assert state.partition_key() == (0, 1, 2, 3)
    assert sorted(map(tuple, state.partition())) == [(0,), (1,), (2,), (3,)]
    state.validate()


def test_single_cluster():
    state = EntityState.single_cluster(4)
    assert state.n_entities == 1
    assert state.partition_key() == (0, 0, 0, 0)
    state.validate()


def test_from_partition():
    state = EntityState.from_partition([[0, 2], [1]], 3)
    assert state.entity_of(0) == state.entity_of(2)
    assert state.entity_of(0) != state.entity_of(1)
    assert state.size(state.entity_of(0)) == 2
    state.validate()


def test_from_partition_rejects_partial_cover():
    with pytest.raises(ContractError):
        EntityState.from_partition([[0], [1]], 3)
    with pytest.raises(ContractError):
        EntityState.from_partition([[0, 1], [1, 2]], 3)


def test_apply_move_to_existing_entity():
    state = EntityState.singletons(3)
    src, tgt = state.entity_of(0), state.entity_of(1)
    got = state.apply_move(Move(mention=0, source=src, target=tgt))
    assert got == tgt
    assert state.entity_of(0) == tgt
    assert state.n_entities == 2
    assert src not in state.members
    state.validate()


def test_apply_move_fresh_allocates_new_entity():
    state = EntityState.from_partition([[0, 1], [2]], 3)
    src = state.entity_of(0)
    before = set(state.entity_ids)
    got = state.apply_move(Move(mention=0, source=src, target=FRESH))
    assert got not in before
    assert state.members[got] == [0]
    assert state.n_entities == 3
    state.validate()


def test_apply_move_same_entity_is_noop():
    state = EntityState.single_cluster(3)
    eid = state.entity_of(1)
    key = state.partition_key()
    assert state.apply_move(Move(mention=1, source=eid, target=eid)) == eid
    assert state.partition_key() == key


def test_apply_move_checks_source_membership():
    state = EntityState.singletons(3)
    with pytest.raises(ContractError):
        state.apply_move(Move(mention=0, source=state.entity_of(1), target=FRESH))


def test_apply_move_checks_target_exists():
    state = EntityState.singletons(3)
    with pytest.raises(ContractError):
        state.apply_move(Move(mention=0, source=state.entity_of(0), target=99))


def test_apply_move_bumps_versions():
    state = EntityState.from_partition([[0, 1], [2]], 3)
    src, tgt = state.entity_of(0), state.entity_of(2)
    v_src, v_tgt = state.versions[src], state.versions[tgt]
    state.apply_move(Move(mention=0, source=src, target=tgt))
    assert state.versions[src] == v_src + 1
    assert state.versions[tgt] == v_tgt + 1


def test_emptied_source_leaves_registry():
    state = EntityState.singletons(2)
    src, tgt = state.entity_of(0), state.entity_of(1)
    state.apply_move(Move(mention=0, source=src, target=tgt))
    assert src not in state.members
    assert src not in state.versions
    assert src not in state.entity_ids
    state.validate()


def test_move_then_reverse_restores_partition():
    state = EntityState.from_partition([[0, 1], [2, 3]], 4)
    key = state.partition_key()
    src, tgt = state.entity_of(0), state.entity_of(2)
    state.apply_move(Move(mention=0, source=src, target=tgt))
    state.apply_move(Move(mention=0, source=tgt, target=src))
    assert state.partition_key() == key
    state.validate()


def test_reverse_through_fresh_restores_partition_key():
    # Moving a singleton out drops its entity id; the reverse move goes
    # through FRESH and lands on a new id but the same partition.
    state = EntityState.singletons(3)
    key = state.partition_key()
    src, tgt = state.entity_of(0), state.entity_of(1)
    state.apply_move(Move(mention=0, source=src, target=tgt))
    state.apply_move(Move(mention=0, source=tgt, target=FRESH))
    assert state.partition_key() == key
    state.validate()


def test_partition_key_is_label_invariant():
    a = EntityState.from_partition([[0, 1], [2]], 3)
    b = EntityState.from_partition([[2], [0, 1]], 3)
    assert a.partition_key() == b.partition_key()


def test_random_move_fuzz():
    # 100k random legal moves; the bookkeeping invariants must hold
    # throughout and the assignment always matches the member lists.
    rng = np.random.default_rng(17)
    n = 12
    state = EntityState.singletons(n)
    for step in range(100_000):
        m = int(rng.integers(n))
        src = state.entity_of(m)
        if rng.random() < 0.25:
            tgt = FRESH
        else:
            tgt = int(state.entity_ids[rng.integers(state.n_entities)])
        if tgt == src or (tgt == FRESH and state.size(src) == 1):
            continue
        state.apply_move(Move(mention=m, source=src, target=tgt))
        if step % 10_000 == 0:
            state.validate()
    state.validate()
    assert sorted(m for ms in state.members.values() for m in ms) == list(range(n))


def test_validate_catches_corruption():
    state = EntityState.from_partition([[0, 1], [2]], 3)
    state.assignment[2] = state.entity_of(0)
    with pytest.raises(ContractError):
        state.validate()

    state = EntityState.singletons(2)
    state.members[state.entity_of(0)] = []
    with pytest.raises(ContractError, match="empty"):
        state.validate()

    state = EntityState.singletons(2)
    state.entity_ids.append(99)
    with pytest.raises(ContractError, match="registry"):
        state.validate()


def test_greedy_accepts_strict_improvements_only():
    assert accept(1e-9, "greedy", rng=None)
    assert not accept(0.0, "greedy", rng=None)
    assert not accept(-1e-9, "greedy", rng=None)


def test_metropolis_always_accepts_uphill():
    assert accept(0.0, "metropolis", rng=None)
    assert accept(2.5, "metropolis", rng=None)


def test_metropolis_downhill_rate():
    # delta = -ln 2 accepts with probability one half.
    rng = np.random.default_rng(0)
    n = 40_000
    hits = sum(accept(-math.log(2.0), "metropolis", rng) for _ in range(n))
    assert abs(hits / n - 0.5) < 0.01


def test_metropolis_uses_proposal_ratio():
    # The ratio term shifts the exponent: delta -ln2 with log_t_ratio
    # +ln2 is a sure accept, and a strong negative ratio blocks an
    # otherwise uphill move almost always.
    assert accept(-math.log(2.0), "metropolis", rng=None, log_t_ratio=math.log(2.0))
    rng = np.random.default_rng(1)
    hits = sum(accept(1.0, "metropolis", rng, log_t_ratio=-10.0) for _ in range(5000))
    assert hits / 5000 < 0.001


def test_accept_rejects_unknown_mode():
    with pytest.raises(ContractError):
        accept(1.0, "anneal", rng=None)

"""Rank-decay masses and alias-table sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from coresolve.corpus import compute_stats
from coresolve.errors import ContractError
from coresolve.features import Scorer
from coresolve.influence import (
    DECODE_TOLERANCE,
    VoseTable,
    build_repel_table,
    build_table,
    decay_masses,
    influence_canopy_threshold,
    influence_scores,
)

import synth


def test_influence_scores_are_query_pair_scores():
    mentions = synth.ballclub_corpus()
    qn = synth.ballclub_query()
    work = mentions + [qn.as_mention(len(mentions))]
    scorer = synth.scorer_for(work, synth.ballclub_model())
    scores = influence_scores(list(range(6)), 6, scorer)
    assert set(scores) == set(range(6))
    for m, s in scores.items():
        assert s == scorer.pairwise(m, 6)
    # The true cluster outscores every distractor against the query.
    worst_true = min(scores[m] for m in synth.BALLCLUB_EXPECTED)
    best_other = max(scores[m] for m in set(range(6)) - synth.BALLCLUB_EXPECTED)
    assert worst_true > best_other


def test_single_mention_gets_all_mass():
    ids, masses = decay_masses({7: 3.5})
    assert ids == [7]
    assert masses[0] == pytest.approx(1.0)


def test_two_distinct_scores_split_two_to_one():
    # p = 1/2 gives raw masses {1/2, 1/4}; normalized {2/3, 1/3} with
    # the higher score first.
    ids, masses = decay_masses({4: 1.0, 9: 8.0}, p=0.5)
    assert ids == [9, 4]
    assert masses == pytest.approx([2 / 3, 1 / 3])


def test_three_distinct_scores_follow_geometric_decay():
    ids, masses = decay_masses({0: 3.0, 1: 2.0, 2: 1.0}, p=0.05)
    raw = np.array([0.05, 0.0475, 0.045125])
    assert ids == [0, 1, 2]
    assert masses == pytest.approx(raw / raw.sum())


def test_higher_order_decay():
    # r = 2 draws masses proportional to (i + 1)(1 - p)^i; for p = 1/2
    # over three ranks that is {1, 1, 3/4}, normalized elevenths.
    ids, masses = decay_masses({0: 3.0, 1: 2.0, 2: 1.0}, p=0.5, r=2)
    assert masses == pytest.approx([4 / 11, 4 / 11, 3 / 11])


def test_repel_ranks_ascending():
    ids, masses = decay_masses({0: 10.0, 1: -5.0}, p=0.5, repel=True)
    assert ids == [1, 0]
    assert masses == pytest.approx([2 / 3, 1 / 3])


def test_tied_scores_pool_their_rank_masses():
    ids, masses = decay_masses({0: 5.0, 1: 5.0, 2: 1.0}, p=0.5)
    # Ranks 0 and 1 pool (1/2 + 1/4) and split it evenly; ties order by id.
    raw = np.array([0.375, 0.375, 0.125])
    assert ids == [0, 1, 2]
    assert masses == pytest.approx(raw / raw.sum())


def test_uniform_scores_degrade_to_uniform_sampling():
    ids, masses = decay_masses({m: 2.0 for m in range(6)}, p=0.05)
    assert ids == list(range(6))
    assert masses == pytest.approx(np.full(6, 1 / 6))


def test_decay_parameter_validation():
    with pytest.raises(ContractError):
        decay_masses({0: 1.0}, p=0.0)
    with pytest.raises(ContractError):
        decay_masses({0: 1.0}, p=1.0)
    with pytest.raises(ContractError):
        decay_masses({0: 1.0}, r=0)
    with pytest.raises(ContractError):
        decay_masses({})


def test_uniform_masses_need_no_alias():
    table = VoseTable.build(np.arange(5), np.full(5, 0.2))
    assert np.all(table.prob == 1.0)


def test_table_build_validation():
    with pytest.raises(ContractError):
        VoseTable.build(np.array([]), np.array([]))
    with pytest.raises(ContractError):
        VoseTable.build(np.array([0, 1]), np.array([1.2, -0.2]))
    with pytest.raises(ContractError):
        VoseTable.build(np.array([0, 1]), np.array([0.6, 0.6]))


def test_single_outcome_table():
    table = VoseTable.build(np.array([42]), np.array([1.0]))
    rng = np.random.default_rng(0)
    assert table.draw(rng) == 42
    assert set(table.draw_many(rng, 100)) == {42}


def test_decode_identity_on_decay_masses():
    scores = {m: float(s) for m, s in enumerate(np.random.default_rng(1).normal(size=200))}
    table = build_table(scores, p=0.05)
    assert table.max_decode_error() < DECODE_TOLERANCE


def test_draw_frequencies_track_masses():
    scores = {0: 9.0, 1: 5.0, 2: 5.0, 3: 1.0}
    table = build_table(scores, p=0.5)
    rng = np.random.default_rng(3)
    draws = table.draw_many(rng, 200_000)
    freq = np.bincount(draws, minlength=4) / len(draws)
    by_id = {int(i): m for i, m in zip(table.ids, table.masses)}
    for mid in scores:
        assert abs(freq[mid] - by_id[mid]) < 0.01


def test_draw_and_draw_many_agree_in_distribution():
    table = build_table({0: 3.0, 1: 2.0, 2: 1.0}, p=0.3)
    rng = np.random.default_rng(5)
    singles = np.array([table.draw(rng) for _ in range(30_000)])
    freq = np.bincount(singles, minlength=3) / len(singles)
    by_id = {int(i): m for i, m in zip(table.ids, table.masses)}
    for mid, mass in by_id.items():
        assert abs(freq[mid] - mass) < 0.02


def test_uniform_table_passes_chi_square():
    k = 10
    table = VoseTable.build(np.arange(k), np.full(k, 1 / k))
    rng = np.random.default_rng(7)
    draws = table.draw_many(rng, 1_000_000)
    counts = np.bincount(draws, minlength=k)
    result = sps.chisquare(counts)
    assert result.pvalue > 0.001


def test_repel_table_favors_least_query_like():
    scores = {0: 50.0, 1: 0.0, 2: -20.0}
    table = build_repel_table(scores, p=0.5)
    by_id = {int(i): m for i, m in zip(table.ids, table.masses)}
    assert by_id[2] > by_id[1] > by_id[0]


def test_canopy_floor():
    scores = {0: 3.0, 1: 1.0, 2: -2.0}
    assert influence_canopy_threshold(scores, float("-inf")) == {0, 1, 2}
    assert influence_canopy_threshold(scores, 0.0) == {0, 1}
    assert influence_canopy_threshold(scores, 100.0) == set()
    assert influence_canopy_threshold(scores, 3.0) == {0, 1, 2} - {1, 2}


@given(
    st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=1, max_size=40),
)
@settings(max_examples=100, deadline=None)
def test_decode_identity_everywhere(weights):
    masses = np.array(weights)
    masses /= masses.sum()
    table = VoseTable.build(np.arange(len(masses)), masses)
    assert table.max_decode_error() < DECODE_TOLERANCE
    assert table.decoded_masses().sum() == pytest.approx(1.0)


@given(
    st.dictionaries(
        st.integers(min_value=0, max_value=30),
        st.floats(min_value=-100, max_value=100, allow_nan=False),
        min_size=1,
        max_size=12,
    ),
    st.sampled_from([0.05, 0.3, 0.7]),
    st.booleans(),
)
@settings(max_examples=100, deadline=None)
def test_masses_are_a_distribution_ordered_by_score(scores, p, repel):
    ids, masses = decay_masses(scores, p=p, repel=repel)
    assert sorted(ids) == sorted(scores)
    assert masses.sum() == pytest.approx(1.0)
    assert np.all(masses > 0.0)
    ranked = [scores[m] for m in ids]
    if repel:
        assert ranked == sorted(ranked)
    else:
        assert ranked == sorted(ranked, reverse=True)
    # Mass never increases as the rank worsens.
    assert np.all(np.diff(masses) <= 1e-12)

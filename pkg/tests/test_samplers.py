"""Proposal kernels and the sampling loop."""

import csv

import numpy as np
import pytest

from coresolve.errors import ConfigError
from coresolve.evaluation import F1Tracker
from coresolve.influence import build_repel_table, build_table, influence_scores
from coresolve.samplers import (
    ALGORITHMS,
    SamplerConfig,
    baseline_er,
    build_kernel,
    hybrid_attract,
    hybrid_repel,
    run_sampler,
)
from coresolve.state import EntityState

import synth


def ballclub_setup(*, matrix=False):
    corpus = synth.ballclub_corpus()
    qn = synth.ballclub_query()
    template_id = len(corpus)
    work = corpus + [qn.as_mention(template_id)]
    scorer = synth.scorer_for(work, synth.ballclub_model(), matrix=matrix)
    scores = influence_scores(list(range(template_id)), template_id, scorer)
    return scorer, template_id, build_table(scores), build_repel_table(scores)


def cfg_for(algorithm, **kw):
    kw.setdefault("tau_alpha", 0.85)
    kw.setdefault("samples", 2000)
    return SamplerConfig(algorithm=algorithm, **kw)


def test_config_validation():
    with pytest.raises(ConfigError):
        SamplerConfig(algorithm="simulated_annealing")
    with pytest.raises(ConfigError):
        SamplerConfig(acceptance="anneal")
    with pytest.raises(ConfigError):
        SamplerConfig(tau_alpha=1.5)
    with pytest.raises(ConfigError):
        SamplerConfig(samples=-1)
    with pytest.raises(ConfigError):
        SamplerConfig(window=0)


def test_zero_budget_leaves_state_untouched():
    scorer, template_id, attract, _ = ballclub_setup()
    state = EntityState.singletons(7)
    key = state.partition_key()
    cfg = cfg_for("hybrid_attract", samples=0)
    kernel = build_kernel(cfg, template_id=template_id, attract=attract)
    trace = run_sampler(state, scorer, kernel, cfg)
    assert len(trace) == 0
    assert trace.n_accepted == 0
    assert state.partition_key() == key


def test_single_mention_state_only_noops():
    solo = [synth.mention(0, "solo")]
    scorer = synth.scorer_for(solo, synth.pairwise_only())
    table = build_table({0: 0.0})
    for algorithm in ALGORITHMS:
        cfg = cfg_for(algorithm, samples=50)
        kernel = build_kernel(cfg, template_id=0, attract=table, repel=table)
        state = EntityState.singletons(1)
        trace = run_sampler(state, scorer, kernel, cfg)
        assert trace.n_noops == 50, algorithm
        assert trace.n_accepted == 0, algorithm
        assert state.n_entities == 1, algorithm


def test_tau_extremes_pin_the_proposal_mix():
    scorer, template_id, attract, _ = ballclub_setup()
    for tau, want in ((1.0, 1.0), (0.0, 0.0)):
        cfg = cfg_for("hybrid_attract", tau_alpha=tau, samples=400)
        kernel = build_kernel(cfg, template_id=template_id, attract=attract)
        trace = run_sampler(EntityState.singletons(7), scorer, kernel, cfg)
        assert trace.biased_fraction == want
        assert trace.proposals == 400


def test_proposal_mix_tracks_tau():
    scorer, template_id, attract, _ = ballclub_setup()
    cfg = cfg_for("hybrid_attract", tau_alpha=0.7, samples=10_000, seed=5)
    kernel = build_kernel(cfg, template_id=template_id, attract=attract)
    trace = run_sampler(EntityState.singletons(7), scorer, kernel, cfg)
    assert abs(trace.biased_fraction - 0.7) < 0.03


def test_same_seed_same_trace():
    scorer, template_id, attract, _ = ballclub_setup()
    runs = []
    for _ in range(2):
        cfg = cfg_for("hybrid_attract", acceptance="metropolis", seed=13)
        kernel = build_kernel(cfg, template_id=template_id, attract=attract)
        state = EntityState.singletons(7)
        trace = run_sampler(state, scorer, kernel, cfg)
        runs.append((trace.accepted, trace.delta, state.partition_key()))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert np.array_equal(runs[0][1], runs[1][1])
    assert runs[0][2] == runs[1][2]


def test_worked_example_attract_from_singletons():
    scorer, template_id, attract, _ = ballclub_setup()
    state = EntityState.singletons(7)
    cfg = cfg_for("hybrid_attract", seed=0)
    state, trace = hybrid_attract(state, scorer, template_id, attract, cfg)
    members = set(state.members[state.entity_of(template_id)])
    assert members == synth.BALLCLUB_EXPECTED | {template_id}
    assert trace.n_accepted > 0


def test_worked_example_repel_from_single_cluster():
    scorer, template_id, _, repel = ballclub_setup()
    state = EntityState.single_cluster(7)
    cfg = cfg_for("hybrid_repel", samples=3000, seed=0)
    state, trace = hybrid_repel(state, scorer, template_id, repel, cfg)
    members = set(state.members[state.entity_of(template_id)])
    assert members == synth.BALLCLUB_EXPECTED | {template_id}
    assert trace.biased > 0


def test_accepted_deltas_add_up_to_the_score_change():
    scorer, template_id, attract, _ = ballclub_setup()
    for algorithm, acceptance in (("baseline", "metropolis"), ("hybrid_attract", "greedy")):
        cfg = cfg_for(algorithm, acceptance=acceptance, samples=3000, seed=2)
        kernel = build_kernel(cfg, template_id=template_id, attract=attract)
        state = EntityState.singletons(7)
        before = scorer.model_score(state.partition())
        trace = run_sampler(state, scorer, kernel, cfg)
        after = scorer.model_score(state.partition())
        moved = float(trace.delta[trace.accepted.astype(bool)].sum())
        assert moved == pytest.approx(after - before, abs=1e-9)
        state.validate()


def test_metropolis_sometimes_accepts_downhill():
    # Pair scores here are around one, so downhill moves keep a real
    # acceptance probability.
    mentions = synth.stationary_corpus()
    scorer = synth.scorer_for(mentions, synth.stationary_model())
    cfg = cfg_for("baseline", acceptance="metropolis", samples=4000, seed=3)
    kernel = build_kernel(cfg)
    trace = run_sampler(EntityState.singletons(4), scorer, kernel, cfg)
    downhill = trace.delta[(trace.accepted == 1) & (trace.delta < 0)]
    assert len(downhill) > 0


def test_adaptive_stop_at_the_optimum():
    # Start at the known optimum: greedy rejects everything, so the run
    # halts after patience windows with no acceptances.
    scorer, template_id, attract, _ = ballclub_setup()
    state = EntityState.from_partition([[0, 2], [1, 3, 5, 6], [4]], 7)
    cfg = cfg_for("hybrid_attract", samples=5000, adaptive=True, window=50, patience=2)
    kernel = build_kernel(cfg, template_id=template_id, attract=attract)
    trace = run_sampler(state, scorer, kernel, cfg)
    assert len(trace) == 100
    assert trace.n_accepted == 0


def test_tracker_feeds_the_f1_column():
    scorer, template_id, attract, _ = ballclub_setup()
    state = EntityState.singletons(7)
    tracker = F1Tracker(template_id, set(synth.BALLCLUB_EXPECTED), state)
    cfg = cfg_for("hybrid_attract", seed=0)
    kernel = build_kernel(cfg, template_id=template_id, attract=attract)
    trace = run_sampler(state, scorer, kernel, cfg, tracker=tracker)
    assert trace.f1[-1] == pytest.approx(1.0)
    steps = trace.steps_to(1.0)
    assert steps is not None
    assert trace.f1[steps - 1] >= 1.0
    assert np.all(trace.f1[: steps - 1] < 1.0)


def test_trace_csv(tmp_path):
    scorer, template_id, attract, _ = ballclub_setup()
    cfg = cfg_for("hybrid_attract", samples=40, seed=1)
    kernel = build_kernel(cfg, template_id=template_id, attract=attract)
    trace = run_sampler(EntityState.singletons(7), scorer, kernel, cfg)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "accepted", "delta", "f1_q"]
    assert len(rows) == 41
    assert rows[1][0] == "1"
    assert rows[1][3] == ""  # no tracker attached


def test_build_kernel_requirements():
    base = dict(tau_alpha=0.9, samples=10)
    assert build_kernel(SamplerConfig(algorithm="baseline", **base)).name == "baseline"
    with pytest.raises(ConfigError, match="template"):
        build_kernel(SamplerConfig(algorithm="target_fixed", **base))
    with pytest.raises(ConfigError, match="attract"):
        build_kernel(SamplerConfig(algorithm="query_proportional", **base), template_id=0)
    with pytest.raises(ConfigError, match="attract"):
        build_kernel(SamplerConfig(algorithm="hybrid_attract", **base), template_id=0)
    with pytest.raises(ConfigError, match="repel"):
        build_kernel(SamplerConfig(algorithm="hybrid_repel", **base), template_id=0)


def test_baseline_needs_no_query():
    mentions = [synth.mention(i, s, pos=i) for i, s in enumerate(["a", "a", "b"])]
    scorer = synth.scorer_for(mentions, synth.pairwise_only())
    cfg = SamplerConfig(algorithm="baseline", samples=500, acceptance="greedy", seed=4)
    state = EntityState.singletons(3)
    state, trace = baseline_er(state, scorer, cfg)
    assert trace.proposals == 500
    state.validate()
    # Greedy baseline merges the two equal surfaces and leaves "b" alone.
    assert state.entity_of(0) == state.entity_of(1)
    assert state.entity_of(2) != state.entity_of(0)

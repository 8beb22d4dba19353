"""Scratch: validate fixture designs before freezing tests.

Part 1: ballclub fixture pair scores + exhaustive optimum + 3 samplers x 10 seeds.
Part 2: alias fixture realized cosines (to pick bucket boundaries).
"""
import itertools
import sys
import time

import numpy as np

sys.path.insert(0, "/root/pkg/tests")
import synth

from coresolve.corpus import compute_stats
from coresolve.features import Scorer
from coresolve.influence import build_repel_table, build_table, influence_scores
from coresolve.samplers import SamplerConfig, build_kernel, run_sampler
from coresolve.state import EntityState

# ---- Part 1: ballclub ----
corpus = synth.ballclub_corpus()
qn = synth.ballclub_query()
stats = compute_stats(corpus)
template = qn.as_mention(6)
working = corpus + [template]
model = synth.ballclub_model()
scorer = Scorer(working, model, stats)
scorer.build_matrix()

labels = ["m1", "m2", "m3", "m4", "m5", "m6", "q"]
print("pair scores:")
for a in range(7):
    for b in range(a + 1, 7):
        print(f"  {labels[a]}-{labels[b]}: {scorer.pairwise(a, b):8.2f}  cos={scorer.cosine(a,b):.3f}")

parts = synth.enumerate_partitions(7)
print(f"{len(parts)} partitions")
best = max(parts, key=lambda p: scorer.model_score(p))
print("optimum:", sorted(tuple(sorted(g)) for g in best), "score", scorer.model_score(best))
expected = [(0, 2), (1, 3, 5, 6), (4,)]
print("expected:", expected, "score", scorer.model_score(expected))

# sampler check
member_ids = list(range(6))
att_scores = influence_scores(member_ids + [6], 6, scorer)
attract = build_table(att_scores)
repel = build_repel_table(influence_scores(member_ids, 6, scorer))
target = frozenset({1, 3, 5, 6})
for algo in ("target_fixed", "hybrid_attract", "hybrid_repel"):
    wins = 0
    t0 = time.perf_counter()
    for seed in range(10):
        cfg = SamplerConfig(algorithm=algo, tau_alpha=0.85, samples=2000, seed=seed)
        state = (
            EntityState.single_cluster(7) if algo == "hybrid_repel" else EntityState.singletons(7)
        )
        kernel = build_kernel(cfg, template_id=6, attract=attract, repel=repel)
        run_sampler(state, scorer, kernel, cfg)
        got = frozenset(state.members[state.entity_of(6)])
        if got == target:
            wins += 1
        else:
            print(f"  {algo} seed {seed}: got {sorted(got)}")
    print(f"{algo}: {wins}/10 in {time.perf_counter()-t0:.2f}s")

# ---- Part 2: alias cosines ----
print("\nalias fixture cosines:")
acorpus = synth.alias_corpus()
aq = synth.alias_query()
astats = compute_stats(acorpus)
atemplate = aq.as_mention(len(acorpus))
aworking = acorpus + [atemplate]
# model irrelevant for cosine; use ballclub model
asc = Scorer(aworking, model, astats)
T = len(acorpus)
groups = {"car": range(0, 12), "conf": range(12, 15), "clean": range(15, 17)}
for gname, ids in groups.items():
    vals = [asc.cosine(T, i) for i in ids]
    print(f"  tpl-{gname}: min {min(vals):.3f} max {max(vals):.3f}")
carcar = [asc.cosine(a, b) for a in range(12) for b in range(a + 1, 12)]
print(f"  car-car: min {min(carcar):.3f} max {max(carcar):.3f} sorted {sorted(set(round(v,3) for v in carcar))}")
confconf = [asc.cosine(a, b) for a in range(12, 15) for b in range(a + 1, 15)]
print(f"  conf-conf: {confconf}")
carconf = [asc.cosine(a, b) for a in range(12) for b in range(12, 15)]
print(f"  car-conf: min {min(carconf):.3f} max {max(carconf):.3f}")
cleanclean = asc.cosine(15, 16)
print(f"  clean-clean: {cleanclean:.3f}")
tplclean = [asc.cosine(T, i) for i in (15, 16)]
print(f"  tpl-clean: {tplclean}")

# ---- Part 3: alias plateaus through the estimator ----
from coresolve.estimator import QueryResolver
from coresolve.evaluation import f1_q

print("\nalias plateaus (greedy, hybrid_attract):")
truth = {m.id: m.truth for m in acorpus}
for level, kw in (("none", False), ("paragraph", False), ("paragraph", True)):
    tag = f"{level}+kw" if kw else level
    for seed in range(4):
        est = QueryResolver(
            weights=str(synth.ALIAS_WEIGHTS), samples=2500, seed=seed,
            tau_alpha=0.85,
        ).fit(acorpus)
        res = est.resolve(synth.alias_query(level, with_keywords=kw))
        rep = f1_q(res.mention_ids, truth, synth.ALIAS_TRUTH)
        print(f"  {tag:14s} seed {seed}: canopy {res.canopy_size:2d} f1 {rep.f1:.4f}")

# ---- Part 4: stationarity TV + step rate ----
import math
from collections import Counter

from coresolve.samplers import one_step
from coresolve.state import accept as _accept  # noqa: F401

print("\nstationarity:")
c4 = synth.stationary_corpus()
m4 = synth.stationary_model()
s4 = compute_stats(c4)
sc4 = Scorer(c4, m4, s4)
sc4.build_matrix()
parts4 = synth.enumerate_partitions(4)
def _key_of(groups):
    state = EntityState.from_partition(groups, 4)
    return state.partition_key()
log_w = {_key_of(p): sc4.model_score(p) for p in parts4}
zmax = max(log_w.values())
z = sum(math.exp(v - zmax) for v in log_w.values())
exact = {k: math.exp(v - zmax) / z for k, v in log_w.items()}
print(f"  {len(parts4)} partitions, exact max {max(exact.values()):.4f}")

steps = 1_000_000
burn = 10_000
for seed in (0, 1, 2):
    cfg = SamplerConfig(algorithm="baseline", acceptance="metropolis", samples=steps, seed=seed)
    kern = build_kernel(cfg)
    st = EntityState.singletons(4)
    rng = np.random.default_rng(seed)
    counts = Counter()
    key = st.partition_key()
    t0 = time.perf_counter()
    for i in range(steps):
        acc, _, _ = one_step(st, sc4, kern, "metropolis", rng)
        if acc:
            key = st.partition_key()
        if i >= burn:
            counts[key] += 1
    dt = time.perf_counter() - t0
    total = steps - burn
    tv = 0.5 * sum(abs(counts.get(k, 0) / total - p) for k, p in exact.items())
    print(f"  seed {seed}: tv {tv:.4f} in {dt:.1f}s ({steps/dt/1e3:.0f}k steps/s)")

# ---- Part 5: convergence ordering prototype ----
from coresolve.evaluation import F1Tracker

print("\nconvergence ordering:")
BASE_BUDGET = 400_000
FAST_BUDGET = 20_000
for sel in (11, 46, 130):
    t0 = time.perf_counter()
    corpus5, qn5 = synth.planted_canopy(sel)
    stats5 = compute_stats(corpus5)
    tpl5 = qn5.as_mention(len(corpus5))
    working5 = corpus5 + [tpl5]
    model5 = synth.pairwise_only()
    sc5 = Scorer(working5, model5, stats5)
    sc5.build_matrix()
    tid = len(corpus5)
    att5 = build_table(influence_scores(list(range(len(working5))), tid, sc5))
    relevant = {m.id for m in corpus5 if m.truth == synth.PLANTED_TRUTH}
    print(f"  sel {sel}: fixture+matrix in {time.perf_counter()-t0:.1f}s")
    for seed in range(4):
        row = {}
        for algo in ("baseline", "target_fixed", "query_proportional", "hybrid_attract"):
            budget = BASE_BUDGET if algo == "baseline" else FAST_BUDGET
            cfg = SamplerConfig(
                algorithm=algo, acceptance="greedy", samples=budget,
                seed=seed, tau_alpha=0.9,
            )
            st5 = EntityState.singletons(len(working5))
            tr = F1Tracker(tid, relevant, st5)
            kern = build_kernel(cfg, template_id=tid, attract=att5)
            t1 = time.perf_counter()
            trace = run_sampler(st5, sc5, kern, cfg, tracker=tr)
            dt1 = time.perf_counter() - t1
            steps_n = trace.steps_to(0.95)
            row[algo] = (budget if steps_n is None else steps_n, dt1)
        order_ok = (
            row["hybrid_attract"][0] <= row["query_proportional"][0]
            <= row["target_fixed"][0] <= row["baseline"][0]
        )
        ratio = row["hybrid_attract"][0] / row["baseline"][0]
        print(
            f"    seed {seed}: hy {row['hybrid_attract'][0]:>6} qp {row['query_proportional'][0]:>6}"
            f" tf {row['target_fixed'][0]:>6} base {row['baseline'][0]:>7}"
            f" ok={order_ok} ratio={ratio:.4f}"
            f" times {row['baseline'][1]:.1f}/{row['hybrid_attract'][1]:.2f}s"
        )

# ---- Part 6: watchlist scheduling prototype ----
from coresolve.scheduler import run_watchlist

print("\nwatchlist scheduling:")
t0 = time.perf_counter()
wcorpus, wqueries = synth.watchlist_corpus()
wstats = compute_stats(wcorpus)
n_w = len(wcorpus)
wworking = list(wcorpus)
wtids = []
for qn in wqueries:
    wtids.append(len(wworking))
    wworking.append(qn.as_mention(len(wworking)))
wmodel = synth.pairwise_only()
wsc = Scorer(wworking, wmodel, wstats)
wsc.build_matrix()
watts = [
    build_table(influence_scores(list(range(len(wworking))), tid, wsc))
    for tid in wtids
]
wrels = [
    {m.id for m in wcorpus if m.truth == f"cluster{c}"}
    for c in range(len(wqueries))
]
print(f"  fixture+matrix+tables in {time.perf_counter()-t0:.1f}s")

BUDGET, MID, KSLICE = 6000, 3000, 20
for seed in range(6):
    mids = {}
    peaks = {}
    for policy in ("random", "selectivity", "closest_first", "farthest_first"):
        cfg = SamplerConfig(
            algorithm="hybrid_attract", acceptance="greedy", samples=BUDGET,
            seed=seed, tau_alpha=0.9, window=20, patience=5,
        )
        st = EntityState.singletons(len(wworking))
        kernels = [
            build_kernel(cfg, template_id=tid, attract=watts[i])
            for i, tid in enumerate(wtids)
        ]
        trackers = [F1Tracker(wtids[i], wrels[i], st) for i in range(len(wtids))]
        res = run_watchlist(
            st, wsc, kernels, trackers, list(synth.WATCHLIST_SIZES), cfg,
            budget=BUDGET, policy=policy, k_slice=KSLICE,
        )
        mids[policy] = res.mean_f1_at(MID)
        peaks[policy] = (res.peak_budget(), res.final_mean_f1())
    sel_ok = mids["selectivity"] >= mids["random"]
    earliest = min(peaks.values(), key=lambda v: v[0])[0]
    cf_ok = peaks["closest_first"][0] == earliest
    print(
        f"  seed {seed}: mid rand {mids['random']:.3f} sel {mids['selectivity']:.3f} ok={sel_ok}"
        f" | peaks rand {peaks['random']} sel {peaks['selectivity']}"
        f" cf {peaks['closest_first']} ff {peaks['farthest_first']} cf_first={cf_ok}"
    )

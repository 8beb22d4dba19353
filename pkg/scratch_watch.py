"""Scratch: watchlist policy comparison with per-canopy attract tables."""
import sys
import time

import numpy as np

sys.path.insert(0, "/root/pkg/tests")
import synth

from coresolve.corpus import compute_stats
from coresolve.evaluation import F1Tracker
from coresolve.features import Scorer
from coresolve.influence import build_table, influence_scores
from coresolve.samplers import SamplerConfig, build_kernel
from coresolve.scheduler import run_watchlist
from coresolve.state import EntityState

wcorpus, wqueries = synth.watchlist_corpus()
wstats = compute_stats(wcorpus)
wworking = list(wcorpus)
wtids = []
for qn in wqueries:
    wtids.append(len(wworking))
    wworking.append(qn.as_mention(len(wworking)))
wmodel = synth.pairwise_only()
wsc = Scorer(wworking, wmodel, wstats)
wsc.build_matrix()
# per-canopy tables: each query's table spans its own cluster plus template
wrels = [
    {m.id for m in wcorpus if m.truth == f"cluster{c}"}
    for c in range(len(wqueries))
]
watts = [
    build_table(influence_scores(sorted(wrels[i]) + [tid], tid, wsc))
    for i, tid in enumerate(wtids)
]


def sweep(budget, mid, kslice, window, patience, seeds, tau=0.9):
    print(f"budget {budget} mid {mid} k_slice {kslice} window {window} patience {patience} tau {tau}")
    sel_wins = 0
    cf_wins = 0
    for seed in seeds:
        mids = {}
        peaks = {}
        finals = {}
        for policy in ("random", "selectivity", "closest_first", "farthest_first"):
            cfg = SamplerConfig(
                algorithm="hybrid_attract", acceptance="greedy", samples=budget,
                seed=seed, tau_alpha=tau, window=window, patience=patience,
            )
            st = EntityState.singletons(len(wworking))
            kernels = [
                build_kernel(cfg, template_id=tid, attract=watts[i])
                for i, tid in enumerate(wtids)
            ]
            trackers = [F1Tracker(wtids[i], wrels[i], st) for i in range(len(wtids))]
            res = run_watchlist(
                st, wsc, kernels, trackers, list(synth.WATCHLIST_SIZES), cfg,
                budget=budget, policy=policy, k_slice=kslice,
            )
            mids[policy] = res.mean_f1_at(mid)
            peaks[policy] = res.peak_budget()
            finals[policy] = res.final_mean_f1()
        sel_ok = mids["selectivity"] >= mids["random"]
        earliest = min(peaks.values())
        cf_ok = peaks["closest_first"] == earliest
        sel_wins += sel_ok
        cf_wins += cf_ok
        print(
            f"  seed {seed}: mid r {mids['random']:.3f} s {mids['selectivity']:.3f} {'Y' if sel_ok else 'n'}"
            f" | peak r {peaks['random']} s {peaks['selectivity']}"
            f" c {peaks['closest_first']} f {peaks['farthest_first']} {'Y' if cf_ok else 'n'}"
            f" | fin c {finals['closest_first']:.3f} f {finals['farthest_first']:.3f}"
        )
    print(f"  => sel {sel_wins}/{len(seeds)} cf {cf_wins}/{len(seeds)}")


t0 = time.perf_counter()
sweep(6000, 3000, 20, 20, 2, range(10))
sweep(6000, 3000, 20, 30, 2, range(10))
sweep(6000, 3000, 40, 20, 2, range(10))
sweep(6000, 3000, 20, 20, 3, range(10))
print(f"[{time.perf_counter()-t0:.1f}s]")

"""Query-specific F1, incremental tracking, run averaging, and the
experiment harness.

f1_q treats the query entity's members as the retrieved set and all
corpus mentions sharing the query's gold label as the relevant set.
The synthetic query template is not a corpus mention, so it is excluded
from the retrieved count. Empty retrieved sets score precision 0.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigError, ContractError
from .state import EntityState, Move


@dataclass(frozen=True)
class F1Report:
    precision: float
    recall: float
    f1: float
    retrieved: int
    relevant: int
    intersection: int


def _harmonic(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0.0 else 0.0


def f1_q(members, truth: dict[int, object], label, *, template_id: int | None = None) -> F1Report:
    """F1 of a query entity's members against gold labels.

    members: mention ids of the query entity; truth: id -> gold label
    over the corpus mentions under evaluation.
    """
    if label is None:
        raise ContractError("query gold label is unknown")
    relevant = {m for m, lab in truth.items() if lab == label}
    if not relevant:
        raise ContractError(f"no labeled mentions for gold label {label!r}")
    retrieved = {m for m in members if m != template_id}
    inter = len(retrieved & relevant)
    p = inter / len(retrieved) if retrieved else 0.0
    r = inter / len(relevant)
    return F1Report(p, r, _harmonic(p, r), len(retrieved), len(relevant), inter)


class F1Tracker:
    """O(1) f1_q maintenance across accepted moves.

    Counts are updated incrementally from each accepted move; only a
    move of the template itself (re-anchoring the query entity) forces
    a rescan of the new entity.
    """

    def __init__(self, template_id: int, relevant: set[int], state: EntityState):
        if not relevant:
            raise ContractError("relevant set is empty")
        self.template_id = template_id
        self.relevant = relevant
        self._state = state
        self._rescan(state.entity_of(template_id))

    def _rescan(self, entity_id: int) -> None:
        self.entity_id = entity_id
        members = self._state.members[entity_id]
        self.retrieved = len(members) - 1
        self.intersection = sum(1 for m in members if m in self.relevant)

    def on_accept(self, move: Move, target: int) -> None:
        if move.mention == self.template_id:
            self._rescan(target)
            return
        hit = move.mention in self.relevant
        if move.source == self.entity_id:
            self.retrieved -= 1
            if hit:
                self.intersection -= 1
        if target == self.entity_id:
            self.retrieved += 1
            if hit:
                self.intersection += 1

    def value(self) -> float:
        p = self.intersection / self.retrieved if self.retrieved > 0 else 0.0
        r = self.intersection / len(self.relevant)
        return _harmonic(p, r)

    def report(self) -> F1Report:
        p = self.intersection / self.retrieved if self.retrieved > 0 else 0.0
        r = self.intersection / len(self.relevant)
        return F1Report(p, r, _harmonic(p, r), self.retrieved, len(self.relevant), self.intersection)


@dataclass
class AveragedTrace:
    mean: np.ndarray
    low: np.ndarray
    high: np.ndarray
    n_runs: int

    def steps_to(self, threshold: float) -> int | None:
        hits = np.nonzero(self.mean >= threshold)[0]
        return int(hits[0]) + 1 if len(hits) else None


def average_runs(traces) -> AveragedTrace:
    """Per-step mean f1 with a min/max envelope.

    Traces of unequal length are truncated to the shortest with a
    warning; order of traces does not matter.
    """
    if not traces:
        raise ContractError("no traces to average")
    lengths = [len(t.f1) for t in traces]
    n = min(lengths)
    if len(set(lengths)) > 1:
        warnings.warn(f"truncating {len(traces)} traces to {n} steps", stacklevel=2)
    stack = np.vstack([t.f1[:n] for t in traces])
    return AveragedTrace(
        mean=stack.mean(axis=0),
        low=stack.min(axis=0),
        high=stack.max(axis=0),
        n_runs=len(traces),
    )


def _load_spec(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"experiment spec not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad experiment spec {path}: {exc}") from exc


def run_experiment(spec_path, out_dir) -> dict:
    """Run the cross-product described by a TOML experiment spec.

    Writes one trace csv per (algorithm, seed, query) run plus a
    summary.json with f1 outcomes, steps-to-threshold, and timing
    breakdowns. Returns the summary dict. With several queries and a
    `policy` key the runs go through the watchlist scheduler instead,
    one aggregate csv per (algorithm, seed).
    """
    from .estimator import QueryResolver

    spec = _load_spec(spec_path)
    for key in ("corpus", "queries"):
        if key not in spec:
            raise ConfigError(f"experiment spec missing {key!r}")
    algorithms = spec.get("algorithms", [])
    seeds = spec.get("seeds", [0])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    summary = {"spec": str(spec_path), "runs": runs}
    if not algorithms:
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
        return summary

    from .corpus import load_corpus, parse_query

    mentions = load_corpus(spec["corpus"], fmt=spec.get("format", "jsonl"))
    queries = [parse_query(q, index=i) for i, q in enumerate(spec["queries"])]
    policy = spec.get("policy")

    def make_resolver(algorithm: str, seed: int) -> QueryResolver:
        return QueryResolver(
            algorithm=algorithm,
            acceptance=spec.get("acceptance", "greedy"),
            tau_alpha=spec.get("tau_alpha", 0.9),
            samples=spec.get("budget", 1000),
            q=spec.get("q", 3),
            min_jaccard=spec.get("min_jaccard", 0.3),
            decay_p=spec.get("decay_p", 0.05),
            schedule=policy or "random",
            k_slice=spec.get("K", 500),
            window=spec.get("N", 100),
            weights=spec.get("weights"),
            seed=seed,
        )

    threshold = spec.get("threshold", 0.95)
    for algorithm in algorithms:
        for seed in seeds:
            resolver = make_resolver(algorithm, seed).fit(mentions)
            if policy is not None and len(queries) > 1:
                t0 = time.perf_counter()
                result = resolver.resolve_watchlist(queries)
                elapsed = time.perf_counter() - t0
                path = out / f"{algorithm}_seed{seed}_watchlist.csv"
                result.to_csv(path)
                runs.append(
                    {
                        "algorithm": algorithm,
                        "seed": seed,
                        "queries": len(queries),
                        "trace": path.name,
                        "mean_f1": result.mean_f1(),
                        "proposals": result.total_proposals,
                        "total_s": elapsed,
                    }
                )
                continue
            for qi, qn in enumerate(queries):
                result = resolver.resolve(qn)
                path = out / f"{algorithm}_seed{seed}_q{qi}.csv"
                result.trace.to_csv(path)
                entry = {
                    "algorithm": algorithm,
                    "seed": seed,
                    "query": qi,
                    "trace": path.name,
                    "mentions": result.canopy_size,
                    "proposals": len(result.trace),
                    "accepted": result.trace.n_accepted,
                    "timings": result.timings,
                }
                if result.trace.f1 is not None and not np.all(np.isnan(result.trace.f1)):
                    entry["f1_final"] = float(result.trace.f1[-1]) if len(result.trace) else None
                    entry["steps_to_threshold"] = result.trace.steps_to(threshold)
                runs.append(entry)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary

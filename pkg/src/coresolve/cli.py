"""Command-line driver for the resolution pipeline.

Exit codes: 0 success, 2 empty result, 64 usage error, 65 bad input
(corpus, weights, or experiment spec).
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .corpus import CONTEXT_LEVELS, Mention, QueryNode, compute_stats, load_corpus, parse_query
from .errors import ConfigError, ContractError, CorpusFormatError, EmptyResultError
from .estimator import QueryResolver

ALGORITHM_NAMES = {
    "baseline": "baseline",
    "target-fixed": "target_fixed",
    "query-proportional": "query_proportional",
    "hybrid-attract": "hybrid_attract",
    "hybrid-repel": "hybrid_repel",
}
SCHEDULE_NAMES = {
    "random": "random",
    "selectivity": "selectivity",
    "closest": "closest_first",
    "farthest": "farthest_first",
}
CONTENTION_NAMES = {"resample": "resample", "baseline-fallback": "baseline_fallback"}


@click.group(name="coresolve")
def cli():
    """Query-driven entity resolution over mention corpora."""


def corpus_options(f):
    f = click.option("--corpus", required=True, type=click.Path(), help="Mention corpus path.")(f)
    f = click.option("--format", "fmt", default="jsonl", show_default=True,
                     type=click.Choice(["jsonl", "tsv"]), help="Corpus file format.")(f)
    return f


def sampler_options(f):
    f = click.option("--algorithm", default="hybrid-attract", show_default=True,
                     type=click.Choice(sorted(ALGORITHM_NAMES)), help="Proposal strategy.")(f)
    f = click.option("--acceptance", default="greedy", show_default=True,
                     type=click.Choice(["greedy", "metropolis"]), help="Acceptance rule.")(f)
    f = click.option("--tau-alpha", default=0.9, show_default=True,
                     help="Probability of the query-focused proposal branch.")(f)
    f = click.option("--samples", default=1000, show_default=True,
                     help="Proposal budget (per worker when --workers > 1).")(f)
    f = click.option("--q", default=3, show_default=True, help="q-gram size for blocking.")(f)
    f = click.option("--min-jaccard", default=0.3, show_default=True,
                     help="Canopy similarity threshold.")(f)
    f = click.option("--weights", type=click.Path(), default=None,
                     help="Feature weight file (TOML); defaults to built-in weights.")(f)
    f = click.option("--seed", default=0, show_default=True, help="Random seed.")(f)
    f = click.option("--workers", default=1, show_default=True,
                     help="Parallel sampling workers.")(f)
    f = click.option("--contention-policy", "contention", default="resample",
                     show_default=True, type=click.Choice(sorted(CONTENTION_NAMES)),
                     help="What a worker does when it cannot lock both entities.")(f)
    return f


def _make_resolver(params: dict) -> QueryResolver:
    return QueryResolver(
        algorithm=ALGORITHM_NAMES[params["algorithm"]],
        acceptance=params["acceptance"],
        tau_alpha=params["tau_alpha"],
        samples=params["samples"],
        q=params["q"],
        min_jaccard=params["min_jaccard"],
        seed=params["seed"],
        weights=params["weights"],
        workers=params["workers"],
        contention=CONTENTION_NAMES[params["contention"]],
        schedule=SCHEDULE_NAMES[params.get("schedule", "random")],
        k_slice=params.get("k_slice", 500),
        window=params.get("window", 100),
    )


def _parse_keywords(raw: str | None) -> frozenset[str]:
    if not raw:
        return frozenset()
    return frozenset(k.strip().lower() for k in raw.split(",") if k.strip())


@cli.command()
@corpus_options
@click.option("--q", default=3, show_default=True, help="q-gram size.")
@click.option("--out", type=click.Path(), default=None, help="Write the summary as JSON.")
def index(corpus, fmt, q, out):
    """Build the q-gram blocking index and report its shape."""
    from . import blocking

    mentions = load_corpus(corpus, fmt=fmt)
    idx = blocking.build_index(mentions, q=q)
    summary = {
        "mentions": len(mentions),
        "q": q,
        "grams": len(idx.postings),
        "postings": sum(len(v) for v in idx.postings.values()),
    }
    text = json.dumps(summary, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    click.echo(text)


@cli.command()
@corpus_options
def stats(corpus, fmt):
    """Print corpus statistics as JSON."""
    mentions = load_corpus(corpus, fmt=fmt)
    st = compute_stats(mentions)
    labels = {m.truth for m in mentions if m.truth is not None}
    summary = {
        "mentions": len(mentions),
        "documents": st.n_docs,
        "vocabulary": len(st.df),
        "labels": len(labels),
    }
    click.echo(json.dumps(summary, indent=2))


@cli.command()
@corpus_options
@sampler_options
@click.option("--surface", required=True, help="Query surface string.")
@click.option("--context", default="", help="Query context text.")
@click.option("--context-level", default="paragraph", show_default=True,
              type=click.Choice(list(CONTEXT_LEVELS)),
              help="How much of the query context to use in scoring.")
@click.option("--keywords", default=None, help="Comma-separated query keywords.")
@click.option("--exhaustive", is_flag=True,
              help="Skip blocking and resolve against the whole corpus.")
@click.option("--out", type=click.Path(), default=None, help="Write the run trace as CSV.")
def query(corpus, fmt, surface, context, context_level, keywords, exhaustive, out, **params):
    """Resolve a single query and print its entity's mentions."""
    mentions = load_corpus(corpus, fmt=fmt)
    resolver = _make_resolver(params).fit(mentions)
    qn = QueryNode(
        mention=Mention(id=-1, doc_id="@query/0", start_pos=0, surface=surface,
                        context=context, keywords=_parse_keywords(keywords)),
        context_level=context_level,
    )
    result = resolver.resolve(qn, exhaustive=exhaustive)
    for m in result.mentions:
        click.echo(f"{m.doc_id}\t{m.start_pos}\t{m.surface}")
    summary = {
        "canopy": result.canopy_size,
        "entity_size": len(result.mention_ids),
        "proposals": len(result.trace),
        "accepted": result.trace.n_accepted,
        "timings": result.timings,
    }
    if result.engine_stats is not None:
        summary["contention"] = result.engine_stats
    click.echo(json.dumps(summary))
    if out:
        result.trace.to_csv(out)


@cli.command()
@corpus_options
@sampler_options
@click.option("--watchlist", "watchlist_path", required=True, type=click.Path(),
              help="JSONL file of query records {surface, context, keywords}.")
@click.option("--schedule", default="random", show_default=True,
              type=click.Choice(sorted(SCHEDULE_NAMES)), help="Slice scheduling policy.")
@click.option("--k-slice", default=500, show_default=True,
              help="Proposals per scheduling slice.")
@click.option("--window", default=100, show_default=True,
              help="Acceptance window length for convergence tracking.")
@click.option("--budget", default=None, type=int,
              help="Total proposal budget; defaults to --samples.")
@click.option("--out", type=click.Path(), default=None, help="Write the aggregate trace CSV.")
def watchlist(corpus, fmt, watchlist_path, schedule, k_slice, window, budget, out, **params):
    """Resolve every query on a watchlist over one shared state."""
    mentions = load_corpus(corpus, fmt=fmt)
    queries = _load_watchlist(watchlist_path)
    params.update(schedule=schedule, k_slice=k_slice, window=window)
    resolver = _make_resolver(params).fit(mentions)
    result = resolver.resolve_watchlist(queries, budget=budget)
    for i, qn in enumerate(queries):
        click.echo(f"# query {i}: {qn.mention.surface}")
        if result.entities[i] is None:
            click.echo("(unresolved: empty canopy)")
            continue
        for cid in result.entities[i]:
            m = mentions[cid]
            click.echo(f"{m.doc_id}\t{m.start_pos}\t{m.surface}")
    summary = {
        "queries": len(queries),
        "unresolved": result.unresolved,
        "proposals": result.total_proposals,
        "timings": result.timings,
    }
    click.echo(json.dumps(summary))
    if out:
        result.to_csv(out)
        click.echo(f"# aggregate trace: {out}")


def _load_watchlist(path) -> list[QueryNode]:
    queries = []
    try:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusFormatError(
                        f"watchlist line {line_no}: invalid JSON ({exc.msg})"
                    ) from None
                queries.append(parse_query(rec, index=len(queries)))
    except FileNotFoundError:
        raise CorpusFormatError(f"watchlist not found: {path}") from None
    if not queries:
        raise CorpusFormatError(f"watchlist {path} is empty")
    return queries


@cli.command(name="eval")
@click.option("--spec", "spec_path", required=True, type=click.Path(),
              help="Experiment spec (TOML).")
@click.option("--out", required=True, type=click.Path(), help="Results directory.")
def eval_cmd(spec_path, out):
    """Run the experiment cross-product described by a spec file."""
    from .evaluation import run_experiment

    summary = run_experiment(spec_path, out)
    click.echo(json.dumps({"runs": len(summary["runs"]), "out": str(out)}))


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(),
              help="Experiment spec (TOML); its first query is benchmarked.")
@click.option("--workers", "workers_csv", default="1,2,4", show_default=True,
              help="Comma-separated worker counts.")
@click.option("--out", type=click.Path(), default=None, help="Write records as JSON.")
def bench(spec_path, workers_csv, out):
    """Benchmark the parallel engine across worker counts."""
    from .evaluation import _load_spec

    spec = _load_spec(spec_path)
    for key in ("corpus", "queries"):
        if key not in spec:
            raise ConfigError(f"experiment spec missing {key!r}")
    if not spec["queries"]:
        raise ConfigError("bench needs at least one query in the spec")
    try:
        counts = [int(w) for w in str(workers_csv).split(",") if w.strip()]
    except ValueError:
        raise ConfigError(f"bad worker list {workers_csv!r}") from None
    mentions = load_corpus(spec["corpus"], fmt=spec.get("format", "jsonl"))
    qn = parse_query(spec["queries"][0], index=0)
    records = []
    for w in counts:
        resolver = QueryResolver(
            algorithm=spec.get("algorithm", "hybrid_attract"),
            tau_alpha=spec.get("tau_alpha", 1.0),
            samples=spec.get("budget", 1000),
            min_jaccard=spec.get("min_jaccard", 0.3),
            seed=spec.get("seed", 0),
            workers=w,
        ).fit(mentions)
        t0 = time.perf_counter()
        result = resolver.resolve(qn, engine=True)
        elapsed = time.perf_counter() - t0
        records.append({"workers": w, "seconds": elapsed, **(result.engine_stats or {})})
    text = json.dumps(records, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    click.echo(text)


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 64
    except click.Abort:
        click.echo("aborted", err=True)
        return 130
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except EmptyResultError as exc:
        click.echo(f"empty result: {exc}", err=True)
        return 2
    except (ConfigError, ContractError, CorpusFormatError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 65
    return 0


if __name__ == "__main__":
    sys.exit(main())

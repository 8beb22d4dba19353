"""Command-line interface: subcommands, output shapes, exit codes."""

import json

import click
import pytest

from coresolve.cli import main
from coresolve.corpus import save_corpus

import synth

TIMING_KEYS = {"blocking_s", "table_s", "inference_s", "total_s"}


def run_cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def json_tail(out: str) -> dict:
    """The summary line is the last JSON object on stdout."""
    for line in reversed(out.splitlines()):
        if line.startswith("{"):
            return json.loads(line)
    raise AssertionError(f"no JSON summary in output:\n{out}")


@pytest.fixture(scope="module")
def ballclub_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "ballclub.jsonl"
    save_corpus(synth.ballclub_corpus(), str(path))
    return str(path)


@pytest.fixture(scope="module")
def watch_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("watch")
    corpus_rows, queries = synth.watchlist_corpus(sizes=(4, 3))
    corpus = root / "c.jsonl"
    save_corpus(corpus_rows, str(corpus))
    wl = root / "wl.jsonl"
    records = [
        {"surface": qn.mention.surface, "context": qn.mention.context}
        for qn in queries
    ]
    records.append({"surface": "zzzzzzz"})
    wl.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    return str(corpus), str(wl), corpus_rows, queries


def ballclub_query_args(ballclub_file, **extra):
    argv = [
        "query",
        "--corpus", ballclub_file,
        "--surface", synth.BALLCLUB_QUERY_SURFACE,
        "--context", synth.BALLCLUB_QUERY_CONTEXT,
        "--weights", str(synth.WORKED_WEIGHTS),
        "--tau-alpha", "0.85",
        "--samples", "2000",
        "--seed", "0",
        "--exhaustive",
    ]
    for flag, value in extra.items():
        argv += [f"--{flag.replace('_', '-')}", str(value)]
    return argv


def test_query_prints_entity_rows_and_summary(ballclub_file, capsys):
    code, out, err = run_cli(ballclub_query_args(ballclub_file), capsys)
    assert code == 0
    assert err == ""
    rows = [line for line in out.splitlines() if "\t" in line]
    want = [
        f"{m.doc_id}\t{m.start_pos}\t{m.surface}"
        for m in synth.ballclub_corpus()
        if m.id in synth.BALLCLUB_EXPECTED
    ]
    assert rows == want
    summary = json_tail(out)
    assert summary["canopy"] == 6
    assert summary["entity_size"] == 3
    assert summary["proposals"] == 2000
    assert 0 < summary["accepted"] <= 2000
    assert set(summary["timings"]) == TIMING_KEYS
    assert "contention" not in summary


def test_query_with_workers_reports_contention(ballclub_file, capsys):
    code, out, _ = run_cli(
        ballclub_query_args(ballclub_file, workers=2, samples=300, acceptance="metropolis"),
        capsys,
    )
    assert code == 0
    summary = json_tail(out)
    assert summary["contention"]["proposals"] == 600


def test_query_writes_a_trace_csv(ballclub_file, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    code, _, _ = run_cli(
        ballclub_query_args(ballclub_file, samples=50, out=trace), capsys
    )
    assert code == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "step,accepted,delta,f1_q"
    assert len(lines) == 51


def test_query_with_zero_samples(ballclub_file, capsys):
    code, out, _ = run_cli(ballclub_query_args(ballclub_file, samples=0), capsys)
    assert code == 0
    assert [line for line in out.splitlines() if "\t" in line] == []
    assert json_tail(out)["entity_size"] == 0


def test_empty_canopy_exits_2(ballclub_file, capsys):
    argv = ["query", "--corpus", ballclub_file, "--surface", "zzzzzzz"]
    code, _, err = run_cli(argv, capsys)
    assert code == 2
    assert "empty result" in err


def test_usage_errors_exit_64(ballclub_file, capsys):
    code, _, err = run_cli(["query", "--surface", "x"], capsys)
    assert code == 64
    assert "corpus" in err.lower()
    code, _, _ = run_cli(
        ["query", "--corpus", ballclub_file, "--surface", "x", "--algorithm", "sideways"],
        capsys,
    )
    assert code == 64


def test_missing_corpus_exits_65(capsys):
    code, _, err = run_cli(
        ["query", "--corpus", "/nonexistent/c.jsonl", "--surface", "x"], capsys
    )
    assert code == 65
    assert "error" in err


def test_bad_weights_exit_65(ballclub_file, tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("pairwise = [broken")
    code, _, err = run_cli(
        ["query", "--corpus", ballclub_file, "--surface", "x", "--weights", str(bad)],
        capsys,
    )
    assert code == 65
    assert "error" in err


def test_help_exits_0(capsys):
    code, out, _ = run_cli(["--help"], capsys)
    assert code == 0
    assert "query" in out and "watchlist" in out


def test_abort_exits_130(ballclub_file, capsys, monkeypatch):
    import coresolve.cli as cli_mod

    def bail(*a, **kw):
        raise click.Abort()

    monkeypatch.setattr(cli_mod, "load_corpus", bail)
    code, _, err = run_cli(["stats", "--corpus", ballclub_file], capsys)
    assert code == 130
    assert "aborted" in err


def test_index_reports_shape(ballclub_file, tmp_path, capsys):
    out_file = tmp_path / "index.json"
    code, out, _ = run_cli(
        ["index", "--corpus", ballclub_file, "--out", str(out_file)], capsys
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["mentions"] == 6
    assert summary["q"] == 3
    assert summary["grams"] > 0
    assert summary["postings"] >= summary["grams"]
    assert json.loads(out_file.read_text()) == summary


def test_stats_reports_corpus_summary(ballclub_file, capsys):
    code, out, _ = run_cli(["stats", "--corpus", ballclub_file], capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary["mentions"] == 6
    assert summary["documents"] == 6
    assert summary["vocabulary"] > 0
    assert summary["labels"] == 3


def test_watchlist_sections_and_summary(watch_files, tmp_path, capsys):
    corpus, wl, corpus_rows, queries = watch_files
    agg = tmp_path / "agg.csv"
    argv = [
        "watchlist",
        "--corpus", corpus,
        "--watchlist", wl,
        "--samples", "1500",
        "--tau-alpha", "0.9",
        "--k-slice", "25",
        "--seed", "0",
        "--out", str(agg),
    ]
    code, out, _ = run_cli(argv, capsys)
    assert code == 0
    lines = out.splitlines()
    for i, qn in enumerate(queries):
        assert f"# query {i}: {qn.mention.surface}" in lines
    assert "# query 2: zzzzzzz" in lines
    assert "(unresolved: empty canopy)" in lines
    for c in range(2):
        want = {
            f"{m.doc_id}\t{m.start_pos}\t{m.surface}"
            for m in corpus_rows
            if m.truth == f"cluster{c}"
        }
        assert want <= set(lines)
    summary = json_tail(out)
    assert summary["queries"] == 3
    assert summary["unresolved"] == [2]
    assert 0 < summary["proposals"] <= 1500
    assert set(summary["timings"]) == TIMING_KEYS
    assert f"# aggregate trace: {agg}" in lines
    # The stray never enters the run, so the trace has two f1 columns.
    header = agg.read_text().splitlines()[0]
    assert header == "cumulative_proposals,mean_f1_q,f1_q_0,f1_q_1"


def test_single_query_watchlist_agrees_with_query(tmp_path, capsys):
    corpus_rows, queries = synth.watchlist_corpus(sizes=(4,))
    corpus = tmp_path / "c.jsonl"
    save_corpus(corpus_rows, str(corpus))
    wl = tmp_path / "wl.jsonl"
    qn = queries[0]
    wl.write_text(
        json.dumps({"surface": qn.mention.surface, "context": qn.mention.context}) + "\n"
    )
    common = ["--corpus", str(corpus), "--samples", "800", "--tau-alpha", "0.9",
              "--seed", "3"]
    code, qout, _ = run_cli(
        ["query", *common, "--surface", qn.mention.surface,
         "--context", qn.mention.context],
        capsys,
    )
    assert code == 0
    code, wout, _ = run_cli(
        ["watchlist", *common, "--watchlist", str(wl), "--k-slice", "100"], capsys
    )
    assert code == 0
    query_rows = {line for line in qout.splitlines() if "\t" in line}
    watch_rows = {line for line in wout.splitlines() if "\t" in line}
    assert query_rows == watch_rows
    assert len(query_rows) == 4


def test_watchlist_file_errors_exit_65(watch_files, tmp_path, capsys):
    corpus = watch_files[0]
    code, _, err = run_cli(
        ["watchlist", "--corpus", corpus, "--watchlist", str(tmp_path / "nope.jsonl")],
        capsys,
    )
    assert code == 65
    assert "watchlist not found" in err

    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n")
    code, _, err = run_cli(
        ["watchlist", "--corpus", corpus, "--watchlist", str(empty)], capsys
    )
    assert code == 65
    assert "is empty" in err

    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"surface": "x"}\n{oops\n')
    code, _, err = run_cli(
        ["watchlist", "--corpus", corpus, "--watchlist", str(bad)], capsys
    )
    assert code == 65
    assert "line 2" in err


def test_watchlist_with_only_strays_exits_2(watch_files, tmp_path, capsys):
    corpus = watch_files[0]
    wl = tmp_path / "stray.jsonl"
    wl.write_text('{"surface": "zzzzzzz"}\n')
    code, _, err = run_cli(
        ["watchlist", "--corpus", corpus, "--watchlist", str(wl)], capsys
    )
    assert code == 2
    assert "empty result" in err


def write_spec(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture()
def ballclub_spec(ballclub_file, tmp_path):
    return write_spec(
        tmp_path / "spec.toml",
        [
            f'corpus = "{ballclub_file}"',
            f'weights = "{synth.WORKED_WEIGHTS}"',
            'algorithms = ["baseline"]',
            "seeds = [0]",
            "budget = 200",
            "tau_alpha = 0.85",
            "[[queries]]",
            f'surface = "{synth.BALLCLUB_QUERY_SURFACE}"',
            f'context = "{synth.BALLCLUB_QUERY_CONTEXT}"',
            'truth = "yankees"',
        ],
    )


def test_eval_runs_a_spec(ballclub_spec, tmp_path, capsys):
    out_dir = tmp_path / "results"
    code, out, _ = run_cli(["eval", "--spec", ballclub_spec, "--out", str(out_dir)], capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary == {"runs": 1, "out": str(out_dir)}
    assert (out_dir / "summary.json").exists()


def test_eval_bad_spec_exits_65(tmp_path, capsys):
    code, _, err = run_cli(
        ["eval", "--spec", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "o")],
        capsys,
    )
    assert code == 65
    assert "not found" in err


def test_bench_times_worker_counts(ballclub_spec, tmp_path, capsys):
    out_file = tmp_path / "bench.json"
    code, out, _ = run_cli(
        ["bench", "--spec", ballclub_spec, "--workers", "1,2", "--out", str(out_file)],
        capsys,
    )
    assert code == 0
    records = json.loads(out)
    assert [r["workers"] for r in records] == [1, 2]
    for r in records:
        assert r["seconds"] > 0
        assert r["proposals"] == r["workers"] * 200
    assert json.loads(out_file.read_text()) == records


def test_bench_bad_worker_list_exits_65(ballclub_spec, capsys):
    code, _, err = run_cli(
        ["bench", "--spec", ballclub_spec, "--workers", "one,two"], capsys
    )
    assert code == 65
    assert "bad worker list" in err


def test_bench_needs_queries_exit_65(ballclub_file, tmp_path, capsys):
    spec = write_spec(
        tmp_path / "noq.toml",
        [f'corpus = "{ballclub_file}"', "queries = []"],
    )
    code, _, err = run_cli(["bench", "--spec", spec], capsys)
    assert code == 65
    assert "at least one query" in err

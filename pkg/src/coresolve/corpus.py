"""Mention corpus loading, statistics, and tf-idf context vectors.

A corpus is a flat list of mention records. Mention ids are assigned
densely in file order (0..n-1) and are never reused; every downstream
structure (index postings, entity state, influence tables) keys on them.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import CorpusFormatError

logger = logging.getLogger(__name__)

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")

CONTEXT_LEVELS = ("none", "paragraph", "document")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs, dropping empties."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass
class Mention:
    """One extracted mention: a surface string plus its paragraph context."""

    id: int
    doc_id: str
    start_pos: int
    surface: str
    context: str = ""
    truth: str | None = None
    keywords: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.surface:
            raise CorpusFormatError("mention surface must be non-empty")
        if self.start_pos < 0:
            raise CorpusFormatError("start_pos must be non-negative")
        self.keywords = frozenset(self.keywords)

    def context_bag(self) -> dict[str, int]:
        return dict(Counter(tokenize(self.context)))


@dataclass
class QueryNode:
    """A query template mention plus how much of its context to trust."""

    mention: Mention
    context_level: str = "paragraph"
    extra_keywords: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.context_level not in CONTEXT_LEVELS:
            raise CorpusFormatError(
                f"context_level must be one of {CONTEXT_LEVELS}, got {self.context_level!r}"
            )
        self.extra_keywords = frozenset(self.extra_keywords)

    def as_mention(self, mention_id: int) -> Mention:
        """Materialize the template as a working mention with the given id."""
        m = self.mention
        return Mention(
            id=mention_id,
            doc_id=m.doc_id,
            start_pos=m.start_pos,
            surface=m.surface,
            context=m.context,
            truth=m.truth,
            keywords=m.keywords | self.extra_keywords,
        )


def parse_query(rec: dict, index: int = 0) -> QueryNode:
    """Build a QueryNode from a plain record (watchlist row, config table).

    The template's doc_id defaults to a synthetic per-query value so it
    can never look like a corpus document.
    """
    if not isinstance(rec, dict) or "surface" not in rec:
        raise CorpusFormatError("query record must be an object with a 'surface' field")
    mention = Mention(
        id=-1,
        doc_id=rec.get("doc_id", f"@query/{index}"),
        start_pos=0,
        surface=rec["surface"],
        context=rec.get("context") or "",
        truth=rec.get("truth"),
        keywords=frozenset(rec.get("keywords") or ()),
    )
    return QueryNode(mention=mention, context_level=rec.get("context_level", "paragraph"))


def _record_to_mention(rec: dict, idx: int, line_no: int) -> Mention:
    try:
        doc_id = rec["doc_id"]
        start_pos = rec["start_pos"]
        surface = rec["surface"]
    except KeyError as exc:
        raise CorpusFormatError(f"line {line_no}: missing field {exc.args[0]!r}") from None
    if not isinstance(doc_id, str) or not isinstance(surface, str):
        raise CorpusFormatError(f"line {line_no}: doc_id and surface must be strings")
    if not isinstance(start_pos, int) or isinstance(start_pos, bool):
        raise CorpusFormatError(f"line {line_no}: start_pos must be an integer")
    context = rec.get("context") or ""
    truth = rec.get("truth")
    keywords = rec.get("keywords") or ()
    try:
        return Mention(
            id=idx,
            doc_id=doc_id,
            start_pos=start_pos,
            surface=surface,
            context=context,
            truth=truth,
            keywords=frozenset(keywords),
        )
    except CorpusFormatError as exc:
        raise CorpusFormatError(f"line {line_no}: {exc}") from None


def _parse_jsonl(lines: list[str]) -> list[Mention]:
    mentions = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise CorpusFormatError(f"line {line_no}: record must be a JSON object")
        mentions.append(_record_to_mention(rec, len(mentions), line_no))
    return mentions


def _parse_tsv(lines: list[str]) -> list[Mention]:
    mentions = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) != 6:
            raise CorpusFormatError(
                f"line {line_no}: expected 6 tab-separated fields, got {len(fields)}"
            )
        doc_id, start_pos, surface, context, truth, keywords = fields
        try:
            pos = int(start_pos)
        except ValueError:
            raise CorpusFormatError(f"line {line_no}: start_pos must be an integer") from None
        rec = {
            "doc_id": doc_id,
            "start_pos": pos,
            "surface": surface,
            "context": context,
            "truth": truth or None,
            "keywords": [k for k in keywords.split(",") if k] or None,
        }
        mentions.append(_record_to_mention(rec, len(mentions), line_no))
    return mentions


def load_corpus(path: str, fmt: str = "jsonl") -> list[Mention]:
    """Load a mention corpus, assigning dense ids in file order.

    Duplicate (doc_id, start_pos) pairs are rejected: two mentions cannot
    start at the same offset of the same document.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    if fmt == "jsonl":
        mentions = _parse_jsonl(lines)
    elif fmt == "tsv":
        mentions = _parse_tsv(lines)
    else:
        raise CorpusFormatError(f"unknown corpus format {fmt!r}")
    seen: dict[tuple[str, int], int] = {}
    for m in mentions:
        key = (m.doc_id, m.start_pos)
        if key in seen:
            raise CorpusFormatError(
                f"duplicate mention at doc_id={m.doc_id!r} start_pos={m.start_pos}"
                f" (ids {seen[key]} and {m.id})"
            )
        seen[key] = m.id
    return mentions


def mention_record(m: Mention) -> str:
    """Canonical single-line JSON form of a mention."""
    rec = {
        "doc_id": m.doc_id,
        "start_pos": m.start_pos,
        "surface": m.surface,
        "context": m.context,
        "truth": m.truth,
        "keywords": sorted(m.keywords) if m.keywords else None,
    }
    return json.dumps(rec, ensure_ascii=False)


def save_corpus(mentions: list[Mention], path: str) -> None:
    """Write the canonical jsonl form; load(save(x)) round-trips exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for m in mentions:
            fh.write(mention_record(m))
            fh.write("\n")


@dataclass
class CorpusStats:
    """Document frequencies over mention contexts, for tf-idf weighting."""

    n_docs: int
    df: dict[str, int]
    _warned: set = field(default_factory=set, repr=False)

    def idf(self, term: str) -> float:
        if self.n_docs == 0:
            return 0.0
        df = self.df.get(term)
        if df is None:
            # Unseen terms are clamped to df=1 (rarest possible), once per term.
            if term not in self._warned:
                self._warned.add(term)
                logger.info("term %r not in corpus stats; clamping df to 1", term)
            df = 1
        return math.log(self.n_docs / df)


def compute_stats(mentions: list[Mention]) -> CorpusStats:
    """N = distinct documents; df(t) = documents whose contexts contain t."""
    doc_terms: dict[str, set[str]] = {}
    for m in mentions:
        terms = doc_terms.setdefault(m.doc_id, set())
        terms.update(tokenize(m.context))
    df: Counter[str] = Counter()
    for terms in doc_terms.values():
        df.update(terms)
    return CorpusStats(n_docs=len(doc_terms), df=dict(df))


def tfidf_vector(bag: dict[str, int], stats: CorpusStats) -> dict[str, float]:
    """L2-normalized tf-idf vector; a zero vector stays the empty dict."""
    weights = {}
    for term, tf in bag.items():
        w = tf * stats.idf(term)
        if w > 0.0:
            weights[term] = w
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return {}
    return {t: w / norm for t, w in weights.items()}


def cosine(a: dict[str, float], b: dict[str, float]) -> float:
    """Dot product of two normalized sparse vectors."""
    if len(b) < len(a):
        a, b = b, a
    return sum(w * b[t] for t, w in a.items() if t in b)


def document_context(mentions: list[Mention], doc_id: str) -> str:
    """Concatenated contexts of every mention in a document."""
    parts = [m.context for m in mentions if m.doc_id == doc_id and m.context]
    return " ".join(parts)

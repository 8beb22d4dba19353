"""Pairwise and entity-wide feature scoring under a log-linear weight model.

Each feature row is a predicate with a positive weight applied when the
predicate holds and a negative weight applied when it fails; zero or inert
rows contribute nothing. Cosine-similarity rows form a bank of mutually
exclusive half-open buckets, so exactly one of them fires per pair.

Token-specific rows always apply. Context rows (similarity buckets, term
and keyword matches) are skipped entirely for pairs involving a mention
whose context has been disabled, contributing neither branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .corpus import CorpusStats, Mention, cosine, tfidf_vector, tokenize
from .errors import ConfigError

TOKEN_KINDS = frozenset(
    {
        "equal_strings",
        "equal_first_character",
        "equal_second_character",
        "equal_substrings",
        "equal_string_lengths",
        "matching_first_term",
    }
)

CONTEXT_KINDS = frozenset(
    {
        "similarity_bucket",
        "matching_terms",
        "token_in_context",
        "matching_token_in_context",
        "matching_keyword",
        "keyword_in_token",
        "keyword_coverage",
    }
)

ENTITY_KINDS = frozenset({"similar_neighbor", "matching_document"})


@dataclass(frozen=True)
class FeatureSpec:
    """One weight-table row: a predicate kind with its two weight branches."""

    id: str
    kind: str
    pos: float = 0.0
    neg: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.pos < 0:
            raise ConfigError(f"feature {self.id!r}: positive weight must be >= 0")
        if self.neg > 0:
            raise ConfigError(f"feature {self.id!r}: negative weight must be <= 0")


@dataclass
class FeatureModel:
    """An ordered feature-row list split into pairwise and entity-wide rows."""

    pairwise: list[FeatureSpec]
    entity: list[FeatureSpec]

    def __post_init__(self) -> None:
        for spec in self.pairwise:
            if spec.kind != "inert" and spec.kind not in TOKEN_KINDS | CONTEXT_KINDS:
                raise ConfigError(f"unknown pairwise feature kind {spec.kind!r}")
        for spec in self.entity:
            if spec.kind != "inert" and spec.kind not in ENTITY_KINDS:
                raise ConfigError(f"unknown entity feature kind {spec.kind!r}")
        self._validate_buckets()
        self._has_entity = any(
            spec.kind != "inert" and (spec.pos or spec.neg) for spec in self.entity
        )

    def _validate_buckets(self) -> None:
        buckets = [s for s in self.pairwise if s.kind == "similarity_bucket"]
        if not buckets:
            return
        spans = []
        for s in buckets:
            try:
                lo, hi = float(s.params["lo"]), float(s.params["hi"])
            except KeyError as exc:
                raise ConfigError(f"bucket {s.id!r} missing param {exc.args[0]!r}") from None
            if not 0.0 <= lo < hi:
                raise ConfigError(f"bucket {s.id!r}: need 0 <= lo < hi")
            spans.append((lo, hi))
        spans.sort(reverse=True)
        los = [lo for lo, _ in spans]
        if sorted(set(los), reverse=True) != los:
            raise ConfigError("similarity bucket thresholds must be strictly decreasing")
        if spans[-1][0] != 0.0 or spans[0][1] < 1.0:
            raise ConfigError("similarity buckets must cover [0, 1]")
        for (lo_hi, _), (_, hi_lo) in zip(spans[:-1], spans[1:]):
            if lo_hi != hi_lo:
                raise ConfigError("similarity buckets must be contiguous half-open intervals")

    @property
    def has_entity_features(self) -> bool:
        return self._has_entity

    def _row(self, row_id: str) -> FeatureSpec | None:
        for spec in self.pairwise:
            if spec.id == row_id:
                return spec
        return None

    @property
    def keyword_weight(self) -> float:
        row = self._row("matching_keyword")
        return row.pos if row else 0.0

    @property
    def extra_token_penalty(self) -> float:
        row = self._row("extra_token")
        return row.neg if row else 0.0


def _bucket(lo: float, hi: float, weight: float) -> FeatureSpec:
    tag = "ge_%03d" % round(lo * 100) if lo > 0 else "lt_020"
    pos = max(weight, 0.0)
    neg = min(weight, 0.0)
    return FeatureSpec(
        id=f"similarity_{tag}", kind="similarity_bucket", pos=pos, neg=neg,
        params={"lo": lo, "hi": hi},
    )


def default_model() -> FeatureModel:
    """The stock weight table; inert rows are kept for config fidelity."""
    inf = math.inf
    pairwise = [
        FeatureSpec("equal_strings", "equal_strings", 20.0, -15.0),
        FeatureSpec("equal_first_character", "equal_first_character", 5.0, 0.0),
        FeatureSpec("equal_second_character", "equal_second_character", 3.0, 0.0),
        FeatureSpec("equal_second_character_dup", "inert"),
        FeatureSpec("unequal_strings", "inert"),
        FeatureSpec("unequal_first_character", "inert"),
        FeatureSpec("unequal_second_character", "inert"),
        FeatureSpec("unequal_second_character_dup", "inert"),
        FeatureSpec("equal_substrings", "equal_substrings", 30.0, -150.0),
        FeatureSpec("unequal_substrings", "inert"),
        FeatureSpec("equal_string_lengths", "equal_string_lengths", 10.0, 0.0),
        FeatureSpec("matching_first_term", "matching_first_term", 90.0, -3.0),
        FeatureSpec("no_matching_first_term", "inert"),
        _bucket(0.99, inf, 120.0),
        _bucket(0.90, 0.99, 105.0),
        _bucket(0.80, 0.90, 80.0),
        _bucket(0.70, 0.80, 55.0),
        _bucket(0.60, 0.70, 35.0),
        _bucket(0.50, 0.60, 15.0),
        _bucket(0.40, 0.50, -5.0),
        _bucket(0.30, 0.40, -50.0),
        _bucket(0.20, 0.30, -80.0),
        _bucket(0.00, 0.20, -100.0),
        FeatureSpec("matching_terms", "matching_terms", 20.0, 0.0),
        FeatureSpec("token_in_context", "token_in_context", 1.0, 0.0),
        FeatureSpec("no_matching_keyword", "inert"),
        FeatureSpec("matching_keyword", "matching_keyword", 700.0, -10.0),
        FeatureSpec("keyword_in_token", "keyword_in_token", 70.0, 0.0),
        FeatureSpec("extra_token", "keyword_coverage", 0.0, -500.0),
        FeatureSpec("matching_token_in_context", "matching_token_in_context", 10.0, 0.0),
    ]
    entity = [
        FeatureSpec("similar_neighbor", "similar_neighbor", 100.0, -5.0,
                    params={"threshold": 0.5}),
        FeatureSpec("no_similar_neighbor", "inert"),
        FeatureSpec("matching_document", "matching_document", 350.0, -15.0),
        FeatureSpec("no_matching_document", "inert"),
    ]
    return FeatureModel(pairwise=pairwise, entity=entity)


def load_weights(path: str) -> FeatureModel:
    """Parse a TOML weight config with [[pairwise]] and [[entity]] rows."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def rows(section: str) -> list[FeatureSpec]:
        out = []
        for i, entry in enumerate(data.get(section, [])):
            if not isinstance(entry, dict):
                raise ConfigError(f"{path}: {section}[{i}] must be a table")
            try:
                spec = FeatureSpec(
                    id=str(entry["id"]),
                    kind=str(entry.get("kind", "inert")),
                    pos=float(entry.get("pos", 0.0)),
                    neg=float(entry.get("neg", 0.0)),
                    params=dict(entry.get("params", {})),
                )
            except KeyError as exc:
                raise ConfigError(
                    f"{path}: {section}[{i}] missing field {exc.args[0]!r}"
                ) from None
            out.append(spec)
        return out

    model = FeatureModel(pairwise=rows("pairwise"), entity=rows("entity"))
    if not model.pairwise:
        raise ConfigError(f"{path}: no pairwise feature rows")
    return model


def dump_weights(model: FeatureModel, path: str) -> None:
    """Write a weight config that load_weights() reads back equivalently."""

    def fmt_value(v) -> str:
        if isinstance(v, float) and math.isinf(v):
            return "inf"
        return repr(v)

    lines = []
    for section, specs in (("pairwise", model.pairwise), ("entity", model.entity)):
        for spec in specs:
            lines.append(f"[[{section}]]")
            lines.append(f'id = "{spec.id}"')
            lines.append(f'kind = "{spec.kind}"')
            lines.append(f"pos = {fmt_value(float(spec.pos))}")
            lines.append(f"neg = {fmt_value(float(spec.neg))}")
            if spec.params:
                inner = ", ".join(f"{k} = {fmt_value(v)}" for k, v in spec.params.items())
                lines.append(f"params = {{ {inner} }}")
            lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def _first_token(tokens: Sequence[str]) -> str | None:
    return tokens[0] if tokens else None


class Scorer:
    """Caching evaluator for pairwise, entity, and whole-state scores.

    Mentions must carry dense ids 0..n-1 (the working-set convention), so
    an optional precomputed score matrix can be indexed by id directly.
    Pairs where either side's id is in context_off skip all context rows.
    """

    def __init__(
        self,
        mentions: Sequence[Mention],
        model: FeatureModel,
        stats: CorpusStats,
        context_off: Iterable[int] = (),
    ) -> None:
        for i, m in enumerate(mentions):
            if m.id != i:
                raise ConfigError("scorer requires dense mention ids 0..n-1")
        self.mentions = list(mentions)
        self.model = model
        self.stats = stats
        self.context_off = frozenset(context_off)
        n = len(mentions)
        self._surfaces = [m.surface.lower() for m in mentions]
        self._tokens = [tokenize(m.surface) for m in mentions]
        self._bags = [m.context_bag() for m in mentions]
        self._vecs = [tfidf_vector(bag, stats) for bag in self._bags]
        self._pw: dict[tuple[int, int], float] = {}
        self._cos: dict[tuple[int, int], float] = {}
        self._matrix: np.ndarray | None = None
        self._n = n

    # -- primitive lookups ------------------------------------------------

    def cosine(self, a: int, b: int) -> float:
        key = (a, b) if a < b else (b, a)
        val = self._cos.get(key)
        if val is None:
            val = cosine(self._vecs[a], self._vecs[b])
            self._cos[key] = val
        return val

    def context_enabled(self, a: int, b: int) -> bool:
        return a not in self.context_off and b not in self.context_off

    def pairwise(self, a: int, b: int) -> float:
        """Sum of pairwise feature contributions for the unordered pair."""
        key = (a, b) if a < b else (b, a)
        val = self._pw.get(key)
        if val is None:
            val = self._pairwise_raw(a, b)
            self._pw[key] = val
        return val

    def _pairwise_raw(self, a: int, b: int) -> float:
        ma, mb = self.mentions[a], self.mentions[b]
        s1, s2 = self._surfaces[a], self._surfaces[b]
        t1, t2 = self._tokens[a], self._tokens[b]
        with_context = self.context_enabled(a, b)
        cos = self.cosine(a, b) if with_context else 0.0
        total = 0.0
        for spec in self.model.pairwise:
            kind = spec.kind
            if kind == "inert":
                continue
            if kind in CONTEXT_KINDS and not with_context:
                continue
            if kind == "similarity_bucket":
                if spec.params["lo"] <= cos < spec.params["hi"]:
                    total += spec.pos + spec.neg
                continue
            holds = self._predicate(kind, ma, mb, s1, s2, t1, t2, a, b)
            if holds is None:
                continue
            total += spec.pos if holds else spec.neg
        return total

    def _predicate(self, kind, ma, mb, s1, s2, t1, t2, a, b):
        if kind == "equal_strings":
            return s1 == s2
        if kind == "equal_first_character":
            return s1[0] == s2[0]
        if kind == "equal_second_character":
            return len(s1) > 1 and len(s2) > 1 and s1[1] == s2[1]
        if kind == "equal_substrings":
            return s1 in s2 or s2 in s1
        if kind == "equal_string_lengths":
            return len(s1) == len(s2)
        if kind == "matching_first_term":
            return bool(t1) and bool(t2) and t1[0] == t2[0]
        if kind == "matching_terms":
            return not set(t1).isdisjoint(t2)
        if kind == "token_in_context":
            bag_a, bag_b = self._bags[a], self._bags[b]
            return any(t in bag_b for t in t1) or any(t in bag_a for t in t2)
        if kind == "matching_token_in_context":
            bag_a, bag_b = self._bags[a], self._bags[b]
            if len(bag_a) > len(bag_b):
                bag_a, bag_b = bag_b, bag_a
            return any(t in bag_b for t in bag_a)
        if kind == "matching_keyword":
            if not ma.keywords or not mb.keywords:
                return None
            return not ma.keywords.isdisjoint(mb.keywords)
        if kind == "keyword_in_token":
            return any(k in s2 for k in ma.keywords) or any(k in s1 for k in mb.keywords)
        if kind == "keyword_coverage":
            return self._covered(ma, mb, s2, b) and self._covered(mb, ma, s1, a)
        raise ConfigError(f"unknown pairwise feature kind {kind!r}")

    def _covered(self, holder: Mention, other: Mention, other_surface: str, other_id: int) -> bool:
        """Every keyword holder carries must have some echo on the other side."""
        if not holder.keywords:
            return True
        bag = self._bags[other_id]
        return any(
            k in bag or k in other_surface or k in other.keywords
            for k in holder.keywords
        )

    # -- entity-wide scoring ----------------------------------------------

    def entity_value(self, members: Iterable[int]) -> float:
        if not self.model.has_entity_features:
            return 0.0
        ids = sorted(members)
        if len(ids) < 2:
            return 0.0
        total = 0.0
        for spec in self.model.entity:
            if spec.kind == "matching_document":
                c = 0
                for i, a in enumerate(ids):
                    doc = self.mentions[a].doc_id
                    for b in ids[i + 1:]:
                        if self.mentions[b].doc_id == doc:
                            c += 1
                total += spec.pos * c if c else spec.neg
            elif spec.kind == "similar_neighbor":
                thr = spec.params.get("threshold", 0.5)
                c = 0
                for i, a in enumerate(ids):
                    for b in ids[i + 1:]:
                        if self.context_enabled(a, b) and self.cosine(a, b) >= thr:
                            c += 1
                total += spec.pos * c if c else spec.neg
        return total

    # -- aggregate scores --------------------------------------------------

    def model_score(self, partition: Iterable[Iterable[int]]) -> float:
        """Score of a full state: pairwise sums within entities, plus
        entity-wide values."""
        total = 0.0
        for members in partition:
            ids = sorted(members)
            for i, a in enumerate(ids):
                for b in ids[i + 1:]:
                    total += self.pairwise(a, b)
            total += self.entity_value(ids)
        return total

    def move_delta(
        self,
        mention_id: int,
        source_members: Iterable[int],
        target_members: Iterable[int],
    ) -> float:
        """Score change from moving a mention, rescoring only the two
        touched entities. source_members includes the mention; target
        excludes it (empty for a fresh entity)."""
        src = list(source_members)
        tgt = list(target_members)
        if mention_id not in src:
            raise ValueError(f"mention {mention_id} not in source entity")
        delta = 0.0
        if self._matrix is not None:
            row = self._matrix[mention_id]
            if tgt:
                delta += row[np.fromiter(tgt, dtype=np.intp, count=len(tgt))].sum()
            if len(src) > 1:
                src_idx = np.fromiter(
                    (x for x in src if x != mention_id), dtype=np.intp, count=len(src) - 1
                )
                delta -= row[src_idx].sum()
        else:
            for x in tgt:
                delta += self.pairwise(mention_id, x)
            for x in src:
                if x != mention_id:
                    delta -= self.pairwise(mention_id, x)
        if self.model.has_entity_features:
            src_after = [x for x in src if x != mention_id]
            delta += self.entity_value(src_after) - self.entity_value(src)
            delta += self.entity_value(tgt + [mention_id]) - self.entity_value(tgt)
        return float(delta)

    # -- hot-path support ---------------------------------------------------

    def build_matrix(self) -> np.ndarray:
        """Precompute the full pairwise score matrix for sampler hot loops."""
        if self._matrix is None:
            n = self._n
            mat = np.zeros((n, n), dtype=np.float64)
            for a in range(n):
                for b in range(a + 1, n):
                    mat[a, b] = mat[b, a] = self.pairwise(a, b)
            self._matrix = mat
        return self._matrix


def pairwise_score(
    a: Mention,
    b: Mention,
    model: FeatureModel,
    stats: CorpusStats,
    *,
    context_enabled: bool = True,
) -> float:
    """Score one mention pair in isolation (no caching)."""
    work = [
        Mention(0, a.doc_id, a.start_pos, a.surface, a.context, a.truth, a.keywords),
        Mention(1, b.doc_id, b.start_pos, b.surface, b.context, b.truth, b.keywords),
    ]
    off = () if context_enabled else (0, 1)
    return Scorer(work, model, stats, context_off=off).pairwise(0, 1)


def entity_score(
    members: Sequence[Mention],
    model: FeatureModel,
    stats: CorpusStats,
) -> float:
    """Entity-wide feature value of a member set in isolation."""
    work = [
        Mention(i, m.doc_id, m.start_pos, m.surface, m.context, m.truth, m.keywords)
        for i, m in enumerate(members)
    ]
    return Scorer(work, model, stats).entity_value(range(len(work)))

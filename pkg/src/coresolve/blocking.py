"""q-gram blocking: approximate surface matching via an inverted index.

Surfaces are lowercased and padded with q-1 '#' on each side, then cut
into all length-q windows (a multiset). Candidate retrieval walks posting
lists and scores multiset Jaccard overlap exactly, so the result equals
brute-force filtering at any threshold.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .corpus import Mention, QueryNode
from .errors import ContractError


def grams(surface: str, q: int = 3) -> Counter:
    """The multiset of padded q-grams of a surface string."""
    if q < 1:
        raise ContractError("gram size q must be >= 1")
    pad = "#" * (q - 1)
    s = pad + surface.lower() + pad
    return Counter(s[i:i + q] for i in range(len(s) - q + 1))


@dataclass
class QGramIndex:
    q: int
    postings: dict[str, list[int]] = field(default_factory=dict)
    gram_counts: dict[int, Counter] = field(default_factory=dict)
    sizes: dict[int, int] = field(default_factory=dict)


def build_index(mentions: list[Mention], q: int = 3) -> QGramIndex:
    """Index every mention surface; postings are sorted and duplicate-free."""
    index = QGramIndex(q=q)
    for m in mentions:
        gs = grams(m.surface, q)
        index.gram_counts[m.id] = gs
        index.sizes[m.id] = sum(gs.values())
        for g in gs:
            index.postings.setdefault(g, []).append(m.id)
    for ids in index.postings.values():
        ids.sort()
    return index


def approximate_match(index: QGramIndex, surface: str, min_jaccard: float) -> list[int]:
    """Ids whose gram-multiset Jaccard with the surface meets the threshold.

    Overlap is accumulated by posting-list counting (min of the two gram
    counts per shared gram type), which cannot miss any candidate with a
    positive-threshold match.
    """
    if not 0.0 < min_jaccard <= 1.0:
        raise ContractError("min_jaccard must be in (0, 1]")
    query_grams = grams(surface, index.q)
    query_size = sum(query_grams.values())
    overlap: dict[int, int] = {}
    for g, cq in query_grams.items():
        for mid in index.postings.get(g, ()):
            overlap[mid] = overlap.get(mid, 0) + min(cq, index.gram_counts[mid][g])
    out = []
    for mid, shared in overlap.items():
        union = query_size + index.sizes[mid] - shared
        if union and shared / union >= min_jaccard:
            out.append(mid)
    out.sort()
    return out


@dataclass
class Canopy:
    """The candidate set a query resolves against."""

    query: QueryNode
    members: list[int]
    min_jaccard: float

    @property
    def selectivity(self) -> int:
        return len(self.members)


def canopy(qn: QueryNode, index: QGramIndex, min_jaccard: float = 0.3) -> Canopy:
    members = approximate_match(index, qn.mention.surface, min_jaccard)
    return Canopy(query=qn, members=members, min_jaccard=min_jaccard)


def selectivity(c: Canopy) -> int:
    return c.selectivity

"""Influence scoring and biased mention sampling via alias tables.

A mention's influence on the query is its pairwise feature score against
the query template (entity-wide features excluded). Mentions are ranked
by that score and given negative-binomial rank-decay masses; tied scores
pool their rank block's mass and share it equally, so uninformative
(uniform) scores degrade to uniform sampling. Repel tables invert the
ranking: the least query-like mentions get the most mass.

Draws are O(1) via the Vose alias construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ContractError
from .features import Scorer

DECODE_TOLERANCE = 1e-9


def influence_scores(member_ids: list[int], query_id: int, scorer: Scorer) -> dict[int, float]:
    """Pairwise score of each member against the query template."""
    return {m: scorer.pairwise(m, query_id) for m in member_ids}


def _rank_masses(n: int, p: float, r: int) -> np.ndarray:
    if not 0.0 < p < 1.0:
        raise ContractError("decay parameter p must be in (0, 1)")
    if r < 1:
        raise ContractError("decay parameter r must be >= 1")
    k = np.arange(n)
    if r == 1:
        masses = p * np.power(1.0 - p, k, dtype=np.float64)
    else:
        masses = np.array(
            [comb(i + r - 1, i) * (1.0 - p) ** i for i in range(n)], dtype=np.float64
        )
    return masses


def decay_masses(
    scores: dict[int, float], p: float = 0.05, r: int = 1, *, repel: bool = False
) -> tuple[list[int], np.ndarray]:
    """Normalized rank-decay masses over mentions, best rank first.

    Returns (ids, masses) with ids sorted by descending score (ascending
    for repel), ties by ascending id. Tied scores share their rank block's
    total mass equally.
    """
    if not scores:
        raise ContractError("cannot build masses over an empty score map")
    sign = 1.0 if repel else -1.0
    order = sorted(scores, key=lambda m: (sign * scores[m], m))
    raw = _rank_masses(len(order), p, r)
    masses = np.empty(len(order), dtype=np.float64)
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and scores[order[j]] == scores[order[i]]:
            j += 1
        masses[i:j] = raw[i:j].sum() / (j - i)
        i = j
    masses /= masses.sum()
    return order, masses


@dataclass
class VoseTable:
    """Alias table for O(1) draws from a fixed discrete distribution."""

    ids: np.ndarray
    masses: np.ndarray
    prob: np.ndarray
    alias: np.ndarray

    @classmethod
    def build(cls, ids, masses) -> "VoseTable":
        ids = np.asarray(ids, dtype=np.int64)
        masses = np.asarray(masses, dtype=np.float64)
        n = len(masses)
        if n == 0:
            raise ContractError("cannot build an alias table with no outcomes")
        if np.any(masses < 0.0):
            raise ContractError("masses must be non-negative")
        if abs(masses.sum() - 1.0) > DECODE_TOLERANCE:
            raise ContractError("masses must sum to 1")
        scaled = masses * n
        prob = np.ones(n, dtype=np.float64)
        alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        scaled = scaled.copy()
        while small and large:
            lo = small.pop()
            hi = large.pop()
            prob[lo] = scaled[lo]
            alias[lo] = hi
            scaled[hi] -= 1.0 - scaled[lo]
            if scaled[hi] < 1.0:
                small.append(hi)
            else:
                large.append(hi)
        for i in large:
            prob[i] = 1.0
        for i in small:
            prob[i] = 1.0
        return cls(ids=ids, masses=masses, prob=prob, alias=alias)

    def __len__(self) -> int:
        return len(self.prob)

    def draw(self, rng: np.random.Generator) -> int:
        """One O(1) draw: a uniform cell plus a biased coin."""
        i = int(rng.integers(len(self.prob)))
        if rng.random() < self.prob[i]:
            return int(self.ids[i])
        return int(self.ids[self.alias[i]])

    def draw_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cells = rng.integers(len(self.prob), size=size)
        coins = rng.random(size)
        chosen = np.where(coins < self.prob[cells], cells, self.alias[cells])
        return self.ids[chosen]

    def decoded_masses(self) -> np.ndarray:
        """Reconstruct each outcome's mass from (prob, alias); the decode
        identity bounds the difference from the input masses by 1e-9."""
        n = len(self.prob)
        decoded = self.prob.copy()
        np.add.at(decoded, self.alias, 1.0 - self.prob)
        return decoded / n

    def max_decode_error(self) -> float:
        return float(np.abs(self.decoded_masses() - self.masses).max())


def build_table(scores: dict[int, float], p: float = 0.05, r: int = 1) -> VoseTable:
    """Attract table: most query-like mentions drawn most often."""
    ids, masses = decay_masses(scores, p, r)
    return VoseTable.build(ids, masses)


def build_repel_table(scores: dict[int, float], p: float = 0.05, r: int = 1) -> VoseTable:
    """Repel table: least query-like mentions drawn most often."""
    ids, masses = decay_masses(scores, p, r, repel=True)
    return VoseTable.build(ids, masses)


def influence_canopy_threshold(scores: dict[int, float], floor: float) -> set[int]:
    """Prune the canopy to mentions whose influence score is >= floor."""
    return {m for m, s in scores.items() if s >= floor}

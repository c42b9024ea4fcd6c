"""Offline stand-in for the LLM teacher with a known effect per instance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..profiling import TypeCounts

EFFECTS = ("effective", "similar", "incorrect")


@dataclass(frozen=True)
class SimProfile:
    types: Mapping[int, str]
    seed: int

    def counts(self) -> TypeCounts:
        vals = list(self.types.values())
        return TypeCounts(vals.count("effective"), vals.count("similar"), vals.count("incorrect"))


def assign_hidden_types(sids: Sequence[int], counts: TypeCounts, seed: int) -> SimProfile:
    """Scatter exactly ``counts`` effects over ``sids`` uniformly at random."""
    if counts.n != len(sids):
        raise ValueError(f"counts cover {counts.n} instances, pool has {len(sids)}")
    labels = ["effective"] * counts.k_ef + ["similar"] * counts.k_si + ["incorrect"] * counts.k_in
    order = np.random.default_rng(seed).permutation(len(sids))
    return SimProfile({int(sids[i]): labels[j] for j, i in enumerate(order)}, seed)


def simulate_ranking(effect: str, target: int, candidates: Sequence[int], sid: int, seed: int, n: int = 25) -> list[int]:
    """The ranking a teacher with the given effect would return.

    effective: target first, then candidates in order; similar: the
    candidates' own top-n; incorrect: a seeded shuffle of the candidates
    with the target removed.
    """
    cands = [int(c) for c in candidates]
    if effect == "effective":
        items = [int(target)] + [c for c in cands if c != target]
    elif effect == "similar":
        items = cands
    elif effect == "incorrect":
        pool = np.array([c for c in cands if c != target], dtype=np.int64)
        items = np.random.default_rng([seed, sid]).permutation(pool).tolist()
    else:
        raise ValueError(f"unknown effect {effect!r}")
    if len(items) < n:
        raise ValueError(f"only {len(items)} items available for a {n}-item ranking")
    return items[:n]

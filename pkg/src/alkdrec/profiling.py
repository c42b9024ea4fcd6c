"""Per-instance difficulty under the teacher, gain assignment and type counts."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backbone import RecommenderModel, encode, sigmoid

RANK_DIRECTIONS = ("hard-first", "easy-first")


@dataclass(frozen=True)
class InstanceProfile:
    sid: int
    df: float
    rank: int
    g_ef: float
    g_si: float
    g_in: float


@dataclass(frozen=True)
class TypeCounts:
    k_ef: int
    k_si: int
    k_in: int

    def __post_init__(self):
        if min(self.k_ef, self.k_si, self.k_in) < 0:
            raise ValueError(f"negative type count in {self}")

    @property
    def n(self) -> int:
        return self.k_ef + self.k_si + self.k_in

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.k_ef, self.k_si, self.k_in)


def difficulty(teacher: RecommenderModel, items: Sequence[int]) -> float:
    """Negative mean logistic agreement between a session's encoding and its own items."""
    if len(items) == 0:
        raise ValueError("cannot profile an empty session")
    enc = encode(teacher, items)
    agreement = sigmoid(teacher.item_embeddings[np.asarray(items)] @ enc)
    return float(-agreement.mean())


def assign_gains(
    difficulties: Mapping[int, float],
    mu: float = 10.0,
    rank_direction: str = "hard-first",
) -> list[InstanceProfile]:
    """Rank instances by difficulty and give rank ``r`` the effective gain ``r**-mu``.

    With ``hard-first`` the hardest instance (largest df) gets rank 1;
    ties go to the smaller sid. Similar and incorrect gains are half the
    effective gain.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if rank_direction not in RANK_DIRECTIONS:
        raise ValueError(f"rank_direction must be one of {RANK_DIRECTIONS}")
    items = list(difficulties.items())
    if any(not np.isfinite(df) for _, df in items):
        raise ValueError("difficulties must be finite")
    sign = -1.0 if rank_direction == "hard-first" else 1.0
    items.sort(key=lambda kv: (sign * kv[1], kv[0]))
    profiles = []
    for r, (sid, df) in enumerate(items, start=1):
        g = float(r) ** -mu
        profiles.append(InstanceProfile(int(sid), float(df), r, g, g / 2, g / 2))
    return profiles


def profile_sessions(teacher: RecommenderModel, sessions, mu: float = 10.0, rank_direction: str = "hard-first") -> list[InstanceProfile]:
    return assign_gains({s.sid: difficulty(teacher, s.items) for s in sessions}, mu, rank_direction)


def type_counts(n: int, ratio: Sequence[float] = (1, 5, 4)) -> TypeCounts:
    """Split ``n`` by ``ratio`` (ef:si:in) with floors; leftovers go to si, then in, then ef."""
    if len(ratio) != 3 or any(r < 0 for r in ratio) or sum(ratio) <= 0:
        raise ValueError("ratio needs three non-negative parts, not all zero")
    total = float(sum(ratio))
    k = [int(np.floor(n * r / total)) for r in ratio]
    rest = n - sum(k)
    fill = [t for t in (1, 2, 0) if ratio[t] > 0]
    i = 0
    while rest > 0:
        k[fill[i % len(fill)]] += 1
        rest -= 1
        i += 1
    return TypeCounts(*k)


def write_profiles(path: str | Path, profiles: Iterable[InstanceProfile]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in profiles:
            fh.write(json.dumps(asdict(p)) + "\n")


def read_profiles(path: str | Path) -> list[InstanceProfile]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(InstanceProfile(**json.loads(line)))
    return out

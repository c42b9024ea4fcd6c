"""Closed-form max-min selection policy and batch sampling.

Positions are the instances sorted by effective gain, largest first. With
``m = k_si + k_in`` the policy puts mass ``1 / (H * (g_si + g_in))`` on the
first ``m`` positions, ``1 / (H * (g_ef + g_in))`` on positions ``m+1..k*``
and nothing beyond ``k*``; ``H`` is the matching prefix sum of reciprocals,
so the vector sums to one. ``gamma`` is the guaranteed minimal expected gain.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .profiling import InstanceProfile, TypeCounts

log = logging.getLogger(__name__)

K_STAR_RULES = ("gamma", "ratio")
_DEN_FLOOR = 1e-300


class InsufficientSupport(ValueError):
    pass


@dataclass(frozen=True)
class SelectionPolicy:
    sids: np.ndarray
    g_ef: np.ndarray
    g_si: np.ndarray
    g_in: np.ndarray
    counts: TypeCounts
    H: np.ndarray
    G: np.ndarray
    k_star: int
    gamma: float
    p: np.ndarray
    rule: str = "gamma"

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.p))

    def gamma_at(self, k: int) -> float:
        """Closed-form game value if the support were cut at position ``k`` (1-based)."""
        c = self.counts
        return float((c.k_ef + c.k_si - self.n + self.G[k - 1]) / self.H[k - 1])

    def to_json(self) -> dict:
        return {
            "k_star": int(self.k_star),
            "gamma": float(self.gamma),
            "counts": list(self.counts.as_tuple()),
            "rule": self.rule,
            "p": [{"sid": int(s), "prob": float(q)} for s, q in zip(self.sids, self.p)],
        }


@dataclass(frozen=True)
class Batch:
    sids: tuple[int, ...]
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.sids)


def _branch_terms(g_ef, g_si, g_in, counts: TypeCounts):
    n = len(g_ef)
    first = np.arange(n) < counts.k_si + counts.k_in
    den = np.where(first, g_si + g_in, g_ef + g_in)
    num = np.where(first, g_si, g_ef)
    return den, num


def prefix_sums(g_ef, g_si, g_in, counts: TypeCounts) -> tuple[np.ndarray, np.ndarray]:
    """Prefix arrays ``H_1..H_N`` (reciprocal denominators) and ``G_1..G_N`` (gain shares).

    The second branch accumulates from position ``k_si + k_in + 1`` onward, on
    top of ``H_{k_si+k_in}``.
    """
    g_ef, g_si, g_in = (np.asarray(a, dtype=np.float64) for a in (g_ef, g_si, g_in))
    if counts.n != len(g_ef):
        raise ValueError(f"counts sum to {counts.n} but there are {len(g_ef)} gains")
    if np.any(np.diff(g_ef) >= 0):
        raise ValueError("effective gains must be strictly decreasing")
    den, num = _branch_terms(g_ef, g_si, g_in, counts)
    if np.any(den <= 0):
        bad = int(np.flatnonzero(den <= 0)[0]) + 1
        raise ValueError(f"non-positive gain denominator at position {bad}")
    den = np.maximum(den, _DEN_FLOOR)
    return np.cumsum(1.0 / den), np.cumsum(num / den)


def find_k_star(g_ef, counts: TypeCounts, H: np.ndarray, G: np.ndarray | None = None, rule: str = "gamma") -> int:
    """Support cutoff (1-based), searched over ``k_si + k_in <= s <= N``; ties go to the smaller s.

    ``rule="gamma"`` maximizes ``(k_ef + k_si - N + G_s) / H_s``, the closed-form
    value of cutting at ``s``. ``rule="ratio"`` maximizes
    ``(g_ef[s] + k_ef + k_si - N) / H_s``, the expression with the per-position
    gain in place of the prefix sum.
    """
    if rule not in K_STAR_RULES:
        raise ValueError(f"rule must be one of {K_STAR_RULES}")
    n = len(H)
    lo = max(1, counts.k_si + counts.k_in)
    offset = counts.k_ef + counts.k_si - n
    if rule == "gamma":
        if G is None:
            raise ValueError("the gamma rule needs the G prefix sums")
        values = (offset + G) / H
    else:
        values = (np.asarray(g_ef, dtype=np.float64) + offset) / H
    return lo + int(np.argmax(values[lo - 1 :]))


def build_policy(
    g_ef: Sequence[float],
    counts: TypeCounts,
    g_si: Sequence[float] | None = None,
    g_in: Sequence[float] | None = None,
    sids: Sequence[int] | None = None,
    rule: str = "gamma",
) -> SelectionPolicy:
    g_ef = np.asarray(g_ef, dtype=np.float64)
    g_si = g_ef / 2 if g_si is None else np.asarray(g_si, dtype=np.float64)
    g_in = g_ef / 2 if g_in is None else np.asarray(g_in, dtype=np.float64)
    sids = np.arange(len(g_ef)) if sids is None else np.asarray(sids, dtype=np.int64)
    n = len(g_ef)

    live = int(np.count_nonzero(g_ef > 0))
    if live < n:
        # underflowed tail: solve on the positive-gain head, removing ef slots first
        dropped = n - live
        k = list(counts.as_tuple())
        for t in (0, 2, 1):
            take = min(k[t], dropped)
            k[t] -= take
            dropped -= take
        log.warning("%d gains underflowed to zero; excluded from the support", n - live)
        head = build_policy(g_ef[:live], TypeCounts(*k), g_si[:live], g_in[:live], sids[:live], rule)
        pad = np.zeros(n - live)
        return SelectionPolicy(
            sids, g_ef, g_si, g_in, head.counts,
            np.concatenate([head.H, np.full(n - live, np.inf)]),
            np.concatenate([head.G, np.full(n - live, head.G[-1])]),
            head.k_star, head.gamma, np.concatenate([head.p, pad]), rule,
        )

    H, G = prefix_sums(g_ef, g_si, g_in, counts)
    k_star = find_k_star(g_ef, counts, H, G, rule)
    den, _ = _branch_terms(g_ef, g_si, g_in, counts)
    p = np.zeros(n)
    p[:k_star] = 1.0 / (H[k_star - 1] * np.maximum(den[:k_star], _DEN_FLOOR))
    gamma = (counts.k_ef + counts.k_si - n + G[k_star - 1]) / H[k_star - 1]
    return SelectionPolicy(sids, g_ef, g_si, g_in, counts, H, G, k_star, float(gamma), p, rule)


def policy_from_profiles(profiles: Sequence[InstanceProfile], counts: TypeCounts, rule: str = "gamma") -> SelectionPolicy:
    ordered = sorted(profiles, key=lambda pr: (-pr.g_ef, pr.rank))
    return build_policy(
        [pr.g_ef for pr in ordered],
        counts,
        [pr.g_si for pr in ordered],
        [pr.g_in for pr in ordered],
        [pr.sid for pr in ordered],
        rule,
    )


def draw(policy: SelectionPolicy, size: int, rng: np.random.Generator) -> np.ndarray:
    """Independent draws (with replacement) of sids from the policy."""
    return policy.sids[rng.choice(policy.n, size=size, p=policy.p)]


def sample_batch(policy: SelectionPolicy, tau: int, seed: int) -> Batch:
    """Draw ``tau`` distinct instances, rejecting repeats, in order of first appearance.

    Repeated draws from ``p`` until ``tau`` distinct instances are seen yield
    the same ordered distribution as successive sampling proportional to
    ``p`` over the not-yet-chosen instances, which an exponential race
    produces exactly in one pass (and terminates even for tiny masses).
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau > policy.support_size:
        raise InsufficientSupport(
            f"insufficient support: tau={tau} but only {policy.support_size} instances have positive probability (k*={policy.k_star})"
        )
    rng = np.random.default_rng(seed)
    support = np.flatnonzero(policy.p > 0)
    keys = rng.exponential(size=len(support)) / policy.p[support]
    chosen = support[np.argsort(keys, kind="stable")[:tau]]
    return Batch(tuple(int(s) for s in policy.sids[chosen]), seed)


def write_policy(path: str | Path, policy: SelectionPolicy) -> None:
    Path(path).write_text(json.dumps(policy.to_json(), indent=1) + "\n", encoding="utf-8")


def write_batch(path: str | Path, batch: Batch) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sid in batch.sids:
            fh.write(f"{sid}\n")


def read_batch(path: str | Path) -> Batch:
    text = Path(path).read_text(encoding="utf-8")
    return Batch(tuple(int(json.loads(line)) for line in text.splitlines() if line.strip()))

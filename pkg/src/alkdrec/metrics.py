"""Single-target top-K metrics under leave-one-out evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .backbone import RecommenderModel, batch_scores
from .dataset import EvalInstance

DEFAULT_KS = (5, 10)


def recall_at_k(ranking: Sequence[int], target: int, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    return 1.0 if target in list(ranking[:k]) else 0.0


def ndcg_at_k(ranking: Sequence[int], target: int, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    top = list(ranking[:k])
    if target not in top:
        return 0.0
    return float(1.0 / np.log2(top.index(target) + 2))


@dataclass
class MetricsReport:
    """Mean metrics plus the per-run values they average."""

    values: dict[str, float]
    per_seed: list[dict[str, float]] = field(default_factory=list)
    n_instances: int = 0

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def keys(self):
        return self.values.keys()

    def to_json(self) -> dict:
        return {"metrics": self.values, "per_seed": self.per_seed, "n_instances": self.n_instances}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def mean_over(cls, reports: Sequence["MetricsReport"]) -> "MetricsReport":
        if not reports:
            raise ValueError("no reports to aggregate")
        keys = list(reports[0].values)
        values = {k: float(np.mean([r.values[k] for r in reports])) for k in keys}
        return cls(values, [dict(r.values) for r in reports], reports[0].n_instances)


def metric_names(ks: Iterable[int]) -> list[str]:
    return [f"{m}@{k}" for k in ks for m in ("recall", "ndcg")]


def target_ranks(model: RecommenderModel, instances: Sequence[EvalInstance], chunk: int = 512) -> np.ndarray:
    """1-based rank of each target among non-prefix items (ties to the smaller id).

    A target that also occurs in its own prefix is never ranked and gets
    ``n_items + 1``.
    """
    ranks = np.empty(len(instances), dtype=np.int64)
    ids = np.arange(model.n_items)
    for start in range(0, len(instances), chunk):
        part = instances[start : start + chunk]
        S = batch_scores(model, [inst.prefix for inst in part])
        for row, inst in enumerate(part):
            s = S[row]
            seen = np.zeros(model.n_items, dtype=bool)
            seen[list(inst.prefix)] = True
            t = inst.target
            if seen[t]:
                ranks[start + row] = model.n_items + 1
                continue
            live = ~seen
            ahead = (s > s[t]) | ((s == s[t]) & (ids < t))
            ranks[start + row] = 1 + int(np.count_nonzero(ahead & live))
    return ranks


def metrics_from_ranks(ranks: np.ndarray, ks: Sequence[int] = DEFAULT_KS) -> dict[str, float]:
    ranks = np.asarray(ranks)
    out = {}
    for k in ks:
        if k < 1:
            raise ValueError("K must be >= 1")
        hit = ranks <= k
        out[f"recall@{k}"] = float(hit.mean())
        out[f"ndcg@{k}"] = float(np.where(hit, 1.0 / np.log2(ranks + 1.0), 0.0).mean())
    return out


def evaluate(model: RecommenderModel, instances: Sequence[EvalInstance], ks: Sequence[int] = DEFAULT_KS) -> MetricsReport:
    if not instances:
        raise ValueError("cannot evaluate on an empty split")
    values = metrics_from_ranks(target_ranks(model, instances), ks)
    return MetricsReport(values, [dict(values)], len(instances))


def format_table(rows: dict[str, MetricsReport | dict[str, float]]) -> str:
    """Aligned text table, one row per named report."""
    names = list(rows)
    if not names:
        return ""
    vals = {n: (r.values if isinstance(r, MetricsReport) else r) for n, r in rows.items()}
    cols = list(vals[names[0]])
    w0 = max(len("run"), *(len(n) for n in names))
    widths = [max(len(c), 8) for c in cols]
    lines = ["  ".join(["run".ljust(w0)] + [c.rjust(w) for c, w in zip(cols, widths)])]
    for n in names:
        lines.append("  ".join([n.ljust(w0)] + [f"{vals[n][c]:.5f}".rjust(w) for c, w in zip(cols, widths)]))
    return "\n".join(lines)

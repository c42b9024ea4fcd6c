"""Planted synthetic interaction logs with a known next-item rule."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import Interaction, InteractionLog, ItemCatalog, write_catalog

STEP_SECONDS = 60


def planted_sessions(
    n_sessions: int = 2000,
    n_items: int = 500,
    p_next: float = 0.8,
    min_len: int = 5,
    max_len: int = 15,
    seed: int = 0,
) -> list[list[int]]:
    """Item sequences where ``i`` is followed by ``i+1 (mod n_items)`` with probability ``p_next``.

    Otherwise the next item is uniform. Items never repeat inside a session;
    a repeat is redrawn uniformly from the unused items.
    """
    if not 0.0 <= p_next <= 1.0:
        raise ValueError("p_next must lie in [0, 1]")
    if not 1 <= min_len <= max_len <= n_items:
        raise ValueError("need 1 <= min_len <= max_len <= n_items")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_sessions):
        length = int(rng.integers(min_len, max_len + 1))
        items = [int(rng.integers(n_items))]
        used = {items[0]}
        while len(items) < length:
            nxt = (items[-1] + 1) % n_items if rng.random() < p_next else int(rng.integers(n_items))
            while nxt in used:
                nxt = int(rng.integers(n_items))
            items.append(nxt)
            used.add(nxt)
        out.append(items)
    return out


def planted_log(seqs: list[list[int]], start: int = 1_000_000_000) -> InteractionLog:
    """One user per sequence, one event a minute, users a week apart."""
    records = []
    for user, items in enumerate(seqs):
        t0 = start + user * 7 * 86400
        records.extend(Interaction(user, item, t0 + k * STEP_SECONDS) for k, item in enumerate(items))
    return InteractionLog(tuple(records))


def planted_catalog(n_items: int) -> ItemCatalog:
    return ItemCatalog({i: f"Item {i}" for i in range(n_items)})


def write_interactions(path: str | Path, log: InteractionLog) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in log.records:
            fh.write(f"{r.user_id}\t{r.item_id}\t{r.timestamp}\n")


def write_planted(out_dir: str | Path, seed: int = 0, n_sessions: int = 2000, n_items: int = 500, p_next: float = 0.8) -> dict[str, Path]:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    seqs = planted_sessions(n_sessions, n_items, p_next, seed=seed)
    paths = {"interactions": d / "interactions.tsv", "catalog": d / "catalog.tsv"}
    write_interactions(paths["interactions"], planted_log(seqs))
    write_catalog(paths["catalog"], planted_catalog(n_items))
    return paths

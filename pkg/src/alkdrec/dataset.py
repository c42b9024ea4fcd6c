"""Interaction logs, sessions, splits and leave-one-out instances."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SPLITS = ("train", "valid", "test")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Interaction:
    user_id: int
    item_id: int
    timestamp: int


@dataclass(frozen=True)
class InteractionLog:
    records: tuple[Interaction, ...]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class ItemCatalog:
    titles: dict[int, str]

    def __post_init__(self):
        for item_id, title in self.titles.items():
            if not title or not title.strip():
                raise DatasetError(f"item {item_id} has an empty title")

    def __len__(self) -> int:
        return len(self.titles)

    def __contains__(self, item_id: int) -> bool:
        return item_id in self.titles

    def title(self, item_id: int) -> str:
        try:
            return self.titles[item_id]
        except KeyError:
            raise KeyError(f"no title for item {item_id}") from None

    def remap(self, id_map: dict[int, int]) -> "ItemCatalog":
        """Re-key the catalog through an original-id -> dense-id map."""
        return ItemCatalog({dense: self.titles[orig] for orig, dense in id_map.items() if orig in self.titles})


@dataclass(frozen=True)
class Session:
    sid: int
    items: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class EvalInstance:
    sid: int
    prefix: tuple[int, ...]
    target: int


@dataclass
class SessionDataset:
    sessions: list[Session]
    split: dict[int, str]
    n_items: int
    catalog: ItemCatalog | None = None
    _by_sid: dict[int, Session] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_sid = {s.sid: s for s in self.sessions}
        missing = set(self._by_sid) - set(self.split)
        if missing:
            raise DatasetError(f"sessions without a split: {sorted(missing)[:5]}")

    def session(self, sid: int) -> Session:
        return self._by_sid[sid]

    def part(self, name: str) -> list[Session]:
        if name not in SPLITS:
            raise DatasetError(f"unknown split {name!r}")
        return [s for s in self.sessions if self.split[s.sid] == name]

    def instances(self, name: str) -> list[EvalInstance]:
        return [leave_one_out(s) for s in self.part(name)]

    def counts(self) -> dict[str, int]:
        out = {name: 0 for name in SPLITS}
        for v in self.split.values():
            out[v] += 1
        return out


def load_interactions(path: str | Path) -> InteractionLog:
    """Read a ``user_id<TAB>item_id<TAB>timestamp`` file.

    Blank lines are ignored; any other row that does not parse as three
    integers raises with its 1-based line number.
    """
    raw = Path(path).read_bytes().decode("utf-8")
    records = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetError(f"{path}: line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            user, item, ts = (int(p) for p in parts)
        except ValueError:
            raise DatasetError(f"{path}: line {lineno}: non-integer field in {line!r}") from None
        if ts < 0:
            raise DatasetError(f"{path}: line {lineno}: negative timestamp")
        records.append(Interaction(user, item, ts))
    if not records:
        raise DatasetError(f"{path}: no interactions")
    return InteractionLog(tuple(records))


def load_hetrec_ratings(path: str | Path) -> InteractionLog:
    """Read HetRec-2011 ``user_ratedmovies-timestamps.dat`` (header, ms timestamps)."""
    records = []
    with open(path, encoding="latin-1") as fh:
        next(fh)
        for line in fh:
            parts = line.split()
            if len(parts) < 4:
                continue
            records.append(Interaction(int(parts[0]), int(parts[1]), int(parts[3]) // 1000))
    return InteractionLog(tuple(records))


def load_catalog(path: str | Path) -> ItemCatalog:
    titles = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        item, _, title = line.partition("\t")
        try:
            titles[int(item)] = title.strip()
        except ValueError:
            raise DatasetError(f"{path}: line {lineno}: bad item id {item!r}") from None
    return ItemCatalog(titles)


def sessionize(log: InteractionLog, window_hours: int = 24) -> list[Session]:
    """Group each user's interactions into fixed windows anchored at their first event."""
    if window_hours < 1:
        raise DatasetError("window_hours must be >= 1")
    width = window_hours * 3600
    by_user: dict[int, list[Interaction]] = {}
    for rec in log.records:
        by_user.setdefault(rec.user_id, []).append(rec)

    sessions = []
    for user in sorted(by_user):
        recs = sorted(by_user[user], key=lambda r: r.timestamp)
        t0 = recs[0].timestamp
        groups: dict[int, list[int]] = {}
        for r in recs:
            groups.setdefault((r.timestamp - t0) // width, []).append(r.item_id)
        for w in sorted(groups):
            sessions.append(Session(len(sessions), tuple(groups[w])))
    return sessions


def filter_short(sessions: Iterable[Session], min_len: int = 5) -> tuple[list[Session], dict[int, int]]:
    """Drop sessions shorter than ``min_len`` and densely re-index the surviving items.

    Returns the kept sessions (item ids now in ``0..N-1``, sids unchanged) and
    the original-id -> dense-id map, ordered by original id.
    """
    if min_len < 1:
        raise DatasetError("min_len must be >= 1")
    kept = [s for s in sessions if len(s) >= min_len]
    originals = sorted({v for s in kept for v in s.items})
    id_map = {orig: dense for dense, orig in enumerate(originals)}
    return [Session(s.sid, tuple(id_map[v] for v in s.items)) for s in kept], id_map


def split_sessions(
    sessions: Sequence[Session],
    ratios: Sequence[float] = (6, 2, 2),
    seed: int = 0,
    n_items: int | None = None,
    catalog: ItemCatalog | None = None,
) -> SessionDataset:
    """Shuffle by seed and cut into train/valid/test.

    Valid and test get ``floor(n * r / sum(r))`` sessions; the remainder goes to train.
    """
    if len(sessions) < 3:
        raise DatasetError("need at least 3 sessions to split")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DatasetError("ratios must be three positive numbers")
    n = len(sessions)
    total = float(sum(ratios))
    n_valid = int(np.floor(n * ratios[1] / total))
    n_test = int(np.floor(n * ratios[2] / total))
    n_train = n - n_valid - n_test

    order = np.random.default_rng(seed).permutation(n)
    split = {}
    for pos, idx in enumerate(order):
        name = "train" if pos < n_train else "valid" if pos < n_train + n_valid else "test"
        split[sessions[idx].sid] = name
    if n_items is None:
        n_items = 1 + max(v for s in sessions for v in s.items)
    return SessionDataset(list(sessions), split, n_items, catalog)


def leave_one_out(session: Session) -> EvalInstance:
    if len(session) < 2:
        raise DatasetError(f"session {session.sid} has fewer than 2 items")
    return EvalInstance(session.sid, session.items[:-1], session.items[-1])


# -- persistence -------------------------------------------------------------

def write_sessions(path: str | Path, sessions: Iterable[Session]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sessions:
            fh.write(json.dumps({"sid": s.sid, "items": list(s.items)}) + "\n")


def read_sessions(path: str | Path) -> list[Session]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(Session(int(rec["sid"]), tuple(int(v) for v in rec["items"])))
    return out


def write_id_map(path: str | Path, id_map: dict[int, int]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for orig, dense in sorted(id_map.items(), key=lambda kv: kv[1]):
            fh.write(f"{orig}\t{dense}\n")


def read_id_map(path: str | Path) -> dict[int, int]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            orig, dense = line.split("\t")
            out[int(orig)] = int(dense)
    return out


def write_split(path: str | Path, split: dict[int, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sid in sorted(split):
            fh.write(f"{sid}\t{split[sid]}\n")


def read_split(path: str | Path) -> dict[int, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            sid, name = line.split("\t")
            out[int(sid)] = name
    return out


def write_catalog(path: str | Path, catalog: ItemCatalog) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in sorted(catalog.titles):
            fh.write(f"{item}\t{catalog.titles[item]}\n")


def save_dataset(directory: str | Path, ds: SessionDataset, id_map: dict[int, int] | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_split(d / "split.tsv", ds.split)
    if id_map is not None:
        write_id_map(d / "id_map.tsv", id_map)
    if ds.catalog is not None:
        write_catalog(d / "catalog.tsv", ds.catalog)
    (d / "meta.json").write_text(json.dumps({"n_items": ds.n_items}) + "\n")
    # sessions last: its presence marks the stage complete
    write_sessions(d / "sessions.jsonl", ds.sessions)


def load_dataset(directory: str | Path) -> SessionDataset:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    catalog = load_catalog(d / "catalog.tsv") if (d / "catalog.tsv").exists() else None
    return SessionDataset(read_sessions(d / "sessions.jsonl"), read_split(d / "split.tsv"), int(meta["n_items"]), catalog)

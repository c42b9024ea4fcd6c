"""Teacher rankings for selected instances: LLM over HTTP, or simulated offline."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..backbone import RecommenderModel, rank
from ..dataset import EvalInstance, ItemCatalog, Session
from .client import ChatClient, ChatError, EndpointConfig, chat_complete
from .prompts import (
    RANKING_LENGTH,
    REASK_SUFFIX,
    SUMMARY_TOP_N,
    Hints,
    MalformedResponse,
    build_rec_prompt,
    build_summary_prompt,
    parse_hints,
    parse_ranking,
)
from .simulator import EFFECTS, SimProfile, assign_hidden_types, simulate_ranking

log = logging.getLogger(__name__)

SOURCES = ("rec", "llm", "sim")
MODES = ("simulate", "http")

__all__ = [
    "ChatClient", "ChatError", "EndpointConfig", "chat_complete", "Hints", "MalformedResponse",
    "SimProfile", "assign_hidden_types", "simulate_ranking", "EFFECTS", "TeacherRanking", "Teacher",
    "candidate_set", "summarize", "write_rankings", "read_rankings", "build_rec_prompt",
    "build_summary_prompt", "parse_ranking", "parse_hints",
]


@dataclass(frozen=True)
class TeacherRanking:
    sid: int
    source: str
    items: tuple[int, ...]

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown ranking source {self.source!r}")
        if len(set(self.items)) != len(self.items):
            raise ValueError(f"ranking for session {self.sid} repeats items")


def candidate_set(rec_ranking: Sequence[int], kappa: int = 50) -> list[int]:
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if len(rec_ranking) < kappa:
        raise ValueError(f"ranking has {len(rec_ranking)} items, fewer than kappa={kappa}")
    return [int(v) for v in rec_ranking[:kappa]]


class Teacher:
    """Produces a 25-item ranking per instance from the conventional teacher's candidates.

    In ``http`` mode the LLM re-ranks the candidates, with up to
    ``max_reasks`` corrective re-asks before falling back to the conventional
    teacher's own top items. In ``simulate`` mode each instance's hidden effect
    decides the ranking.
    """

    def __init__(
        self,
        model: RecommenderModel,
        mode: str = "simulate",
        kappa: int = 50,
        n: int = RANKING_LENGTH,
        sim: SimProfile | None = None,
        client: ChatClient | None = None,
        catalog: ItemCatalog | None = None,
        hints: Hints | None = None,
        max_reasks: int = 2,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if kappa < n:
            raise ValueError(f"kappa={kappa} cannot supply a {n}-item ranking")
        if mode == "simulate" and sim is None:
            raise ValueError("simulate mode needs a SimProfile")
        if mode == "http" and (client is None or catalog is None):
            raise ValueError("http mode needs a client and an item catalog")
        self.model, self.mode, self.kappa, self.n = model, mode, kappa, n
        self.sim, self.client, self.catalog, self.hints = sim, client, catalog, hints
        self.max_reasks = max_reasks

    def candidates(self, instance: EvalInstance) -> list[int]:
        return candidate_set(rank(self.model, instance.prefix, self.kappa), self.kappa)

    def _fallback(self, instance: EvalInstance, cands: list[int]) -> TeacherRanking:
        return TeacherRanking(instance.sid, "rec", tuple(cands[: self.n]))

    def _from_llm(self, instance: EvalInstance, cands: list[int], first_reply: str | None = None) -> TeacherRanking:
        prompt = build_rec_prompt(instance.prefix, self.hints, cands, self.catalog, self.n)
        for attempt in range(self.max_reasks + 1):
            asked = prompt if attempt == 0 else prompt + REASK_SUFFIX.format(attempt=attempt + 1, n=self.n)
            try:
                reply = first_reply if attempt == 0 and first_reply is not None else self.client.complete(asked)
                return TeacherRanking(instance.sid, "llm", tuple(parse_ranking(reply, cands, self.n)))
            except MalformedResponse as exc:
                log.info("session %d: %s", instance.sid, exc)
            except ChatError as exc:
                log.warning("session %d: %s; using the conventional teacher", instance.sid, exc)
                break
        return self._fallback(instance, cands)

    def teach(self, instance: EvalInstance) -> TeacherRanking:
        cands = self.candidates(instance)
        if self.mode == "http":
            return self._from_llm(instance, cands)
        effect = self.sim.types[instance.sid]
        items = simulate_ranking(effect, instance.target, cands, instance.sid, self.sim.seed, self.n)
        return TeacherRanking(instance.sid, "sim", tuple(items))

    def teach_many(self, instances: Sequence[EvalInstance]) -> list[TeacherRanking]:
        if self.mode == "simulate":
            return [self.teach(inst) for inst in instances]
        cands = [self.candidates(inst) for inst in instances]
        prompts = [build_rec_prompt(inst.prefix, self.hints, c, self.catalog, self.n) for inst, c in zip(instances, cands)]
        try:
            replies = self.client.complete_many(prompts)
        except ChatError as exc:
            log.warning("batched requests failed (%s); retrying one by one", exc)
            replies = [None] * len(instances)
        return [self._from_llm(inst, c, reply) for inst, c, reply in zip(instances, cands, replies)]


def summarize(
    model: RecommenderModel,
    sessions: Sequence[Session],
    catalog: ItemCatalog,
    client: ChatClient,
    cases: int = 20,
    seed: int = 0,
) -> Hints:
    """Ask the LLM to describe the conventional teacher's recommendation patterns."""
    if not sessions:
        return Hints([], 0, fallback=True)
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(sessions), size=min(cases, len(sessions)), replace=False)
    examples = [(sessions[i].items, rank(model, sessions[i].items, SUMMARY_TOP_N).tolist()) for i in sorted(picked)]
    prompt = build_summary_prompt(examples, catalog)
    try:
        lines = parse_hints(client.complete(prompt))
    except ChatError as exc:
        log.warning("summarization failed (%s); continuing without hints", exc)
        return Hints([], len(examples), fallback=True)
    return Hints(lines, len(examples), fallback=not lines)


def write_rankings(path: str | Path, rankings: Iterable[TeacherRanking]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rankings:
            fh.write(json.dumps({"sid": r.sid, "source": r.source, "items": list(r.items)}) + "\n")


def read_rankings(path: str | Path) -> list[TeacherRanking]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(TeacherRanking(int(rec["sid"]), rec["source"], tuple(int(v) for v in rec["items"])))
    return out

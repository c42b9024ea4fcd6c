"""Prompt templates for the LLM teacher and parsers for its replies."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from ..dataset import ItemCatalog

RANKING_LENGTH = 25
SUMMARY_TOP_N = 20

_ID_TOKEN = re.compile(r"<\s*ID\s*(\d+)\s*>")
_HINT_PREFIX = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


class MalformedResponse(ValueError):
    pass


@dataclass
class Hints:
    lines: list[str] = field(default_factory=list)
    case_count: int = 0
    fallback: bool = False


def sanitize_title(title: str) -> str:
    return " ".join(title.replace("\t", " ").split())


def _titles(ids: Sequence[int], catalog: ItemCatalog) -> list[str]:
    out = []
    for item in ids:
        if item not in catalog:
            raise KeyError(f"no title for item {item}")
        out.append(sanitize_title(catalog.title(item)))
    return out


def _tagged(ids: Sequence[int], catalog: ItemCatalog) -> str:
    return " ".join(f"<ID{item}:{title}>" for item, title in zip(ids, _titles(ids, catalog)))


SUMMARY_HEADER = (
    "Question: You are an AI assistant. Summarize, STRICTLY and at a high level, the logic behind the "
    "recommendations that MY recommender system produced from users' behaviors. Each user interacted with "
    "several items (the behaviors), and the recommender returned its Top-{top_n} items (the results), "
    "most recommended first. Here are {count} {cases} to summarize the relationship between behaviors and results:\n"
)
SUMMARY_CASE = "Case {index}: the user's interactions are {interactions}. The recommendation results are {results}.\n"
SUMMARY_FOOTER = (
    "Do not analyze individual items. Give only high-level patterns supported by the cases above, "
    "one per line, for example:\n"
    "1. Repeats are welcome: a user may still want an item they already have, e.g. a special edition.\n"
)


def build_summary_prompt(cases: Sequence[tuple[Sequence[int], Sequence[int]]], catalog: ItemCatalog) -> str:
    """Prompt asking the LLM to explain the conventional teacher's recommendations.

    ``cases`` holds (session item ids, teacher top-20 item ids) pairs.
    """
    if not cases:
        raise ValueError("summary prompt needs at least one case")
    parts = [SUMMARY_HEADER.format(top_n=SUMMARY_TOP_N, count=len(cases), cases="case" if len(cases) == 1 else "cases")]
    for i, (session, recs) in enumerate(cases, start=1):
        parts.append(SUMMARY_CASE.format(
            index=i,
            interactions=", ".join(_titles(session, catalog)),
            results=", ".join(_titles(recs, catalog)),
        ))
    parts.append(SUMMARY_FOOTER)
    return "".join(parts)


REC_TEMPLATE = (
    "Question: You are an AI recommender system. Make accurate recommendations for the user from their behaviors.\n"
    "Hints for recommendation: {hints}\n"
    "The user has interacted with {count} items: {history}.\n"
    "From these interactions, rank the items in this candidate set: {candidates}.\n"
    "Rank ALL the candidates and return EXACTLY {n} of them, the top position being the strongest recommendation. "
    "Output ONLY the list, with no other text, as [<ID1>,...,<ID{n}>]: each ID wrapped as <ID...> WITHOUT its title, "
    "IDs separated by commas.\n"
)


def render_hints(hints: Hints | None) -> str:
    if hints is None or not hints.lines:
        return "[]"
    return "[" + "; ".join(sanitize_title(h) for h in hints.lines) + "]"


def build_rec_prompt(
    prefix: Sequence[int],
    hints: Hints | None,
    candidates: Sequence[int],
    catalog: ItemCatalog,
    n: int = RANKING_LENGTH,
) -> str:
    if not candidates:
        raise ValueError("recommendation prompt needs a non-empty candidate set")
    return REC_TEMPLATE.format(
        hints=render_hints(hints),
        count=len(prefix),
        history=_tagged(prefix, catalog),
        candidates=_tagged(candidates, catalog),
        n=n,
    )


REASK_SUFFIX = (
    "\nYour previous answer could not be used (attempt {attempt}). Reply with ONLY the list of EXACTLY {n} "
    "candidate IDs in the required format.\n"
)


def parse_ranking(text: str, candidates: Sequence[int], n: int = RANKING_LENGTH) -> list[int]:
    """First ``n`` distinct candidate ids found as ``<ID123>`` tokens, in order."""
    allowed = set(candidates)
    seen: set[int] = set()
    out: list[int] = []
    for match in _ID_TOKEN.finditer(text):
        item = int(match.group(1))
        if item in allowed and item not in seen:
            seen.add(item)
            out.append(item)
    if len(out) < n:
        raise MalformedResponse(f"malformed response: {len(out)} valid candidate ids, need {n}")
    return out[:n]


def parse_hints(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = _HINT_PREFIX.sub("", raw).strip()
        if line:
            lines.append(line)
    return lines

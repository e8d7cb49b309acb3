"""Aspect discovery support: prompt emission, response files, agreement.

No network client lives here. Model responses are read from JSON files
({business_id, model_tag, aspects: [...], ratings: {aspect: [...]}}), one
array per model, so the pipeline stays hermetic. Raw aspect names are
folded onto the closed six-aspect set through a bundled alias table, with
anything unrecognized going to "other".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .config import ASPECTS
from .errors import DataError
from .ingest import CorpusRecord

PROMPT = ("From the customer reviews above, identify key aspects of the dining "
          "experience for labeling purposes. For each identified aspect, assign "
          "a rating to each review on a 5-point scale.")

CANONICAL_ASPECTS = tuple(ASPECTS) + ("other",)


def emit_prompt(reviews: Sequence[CorpusRecord]) -> str:
    """Numbered review texts followed by the discovery prompt, byte-stable."""
    if not reviews:
        raise DataError("emit_prompt needs at least one review")
    lines = [f"{i}. {rec.text}" for i, rec in enumerate(reviews, start=1)]
    return "\n".join(lines) + "\n\n" + PROMPT + "\n"


# ---------------------------------------------------------------------------
# canonicalization


def _normalize(raw: str) -> str:
    s = raw.lower().replace("_", " ").replace("-", " ")
    return " ".join(s.split())


@lru_cache(maxsize=1)
def _alias_table() -> dict:
    table = {}
    path = resources.files("absa").joinpath("data/aspect_aliases.tsv")
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            alias, canonical = line.split("\t")
            table[alias] = canonical
    return table


def canonicalize_aspect(raw: str) -> str:
    """Map a raw aspect name onto the six canonical aspects or "other".

    Total and idempotent on canonical names. Unlisted "<noun> quality"
    phrases count as food_quality.
    """
    name = _normalize(raw)
    table = _alias_table()
    if name in table:
        return table[name]
    if name.endswith(" quality"):
        return "food_quality"
    return "other"


# ---------------------------------------------------------------------------
# responses


@dataclass
class AspectResponse:
    business_id: str
    model_tag: str
    aspects: list[str]
    ratings: dict = field(default_factory=dict)   # raw aspect -> list of 1..5

    def canonical_set(self) -> frozenset:
        return frozenset(canonicalize_aspect(a) for a in self.aspects)


def _parse_response(obj: dict, path, idx: int) -> AspectResponse:
    where = f"{path}: response {idx}"
    if not isinstance(obj, dict):
        raise DataError(f"{where}: expected an object")
    for key in ("business_id", "model_tag", "aspects"):
        if key not in obj:
            raise DataError(f"{where}: missing field {key!r}")
    aspects = obj["aspects"]
    if not isinstance(aspects, list) or not all(isinstance(a, str) for a in aspects):
        raise DataError(f"{where}: aspects must be a list of strings")
    if any(not a.strip() for a in aspects):
        raise DataError(f"{where}: empty aspect name")
    ratings = obj.get("ratings", {})
    if not isinstance(ratings, dict):
        raise DataError(f"{where}: ratings must be an object")
    for aspect, values in ratings.items():
        if not isinstance(values, list) or not all(
                isinstance(v, int) and not isinstance(v, bool) and 1 <= v <= 5
                for v in values):
            raise DataError(f"{where}: ratings for {aspect!r} must be integers in 1..5")
    return AspectResponse(business_id=str(obj["business_id"]),
                          model_tag=str(obj["model_tag"]),
                          aspects=list(aspects),
                          ratings={str(k): list(v) for k, v in ratings.items()})


def load_responses(path: str | Path) -> list[AspectResponse]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list):
        raise DataError(f"{path}: expected a response object or array")
    return [_parse_response(obj, path, i) for i, obj in enumerate(payload)]


# ---------------------------------------------------------------------------
# agreement statistics


def aspect_agreement(responses_a: Iterable[AspectResponse],
                     responses_b: Iterable[AspectResponse]) -> dict:
    """Per-aspect occurrence and inter-model agreement percentages.

    occurrence(a): share of businesses where at least one model lists a.
    agreement(a): among those businesses, share where both models do;
    None when the aspect never occurs. Both response sets must cover the
    same businesses.
    """
    by_biz_a: dict[str, set] = {}
    for resp in responses_a:
        by_biz_a.setdefault(resp.business_id, set()).update(resp.canonical_set())
    by_biz_b: dict[str, set] = {}
    for resp in responses_b:
        by_biz_b.setdefault(resp.business_id, set()).update(resp.canonical_set())
    only_a = sorted(set(by_biz_a) - set(by_biz_b))
    only_b = sorted(set(by_biz_b) - set(by_biz_a))
    if only_a or only_b:
        raise DataError(
            "response sets cover different businesses: "
            f"only in first {only_a}, only in second {only_b}")
    if not by_biz_a:
        raise DataError("no responses to compare")
    businesses = sorted(by_biz_a)
    n = len(businesses)
    seen = [a for a in CANONICAL_ASPECTS
            if any(a in by_biz_a[b] or a in by_biz_b[b] for b in businesses)]
    order = [a for a in ASPECTS] + [a for a in seen if a not in ASPECTS]
    stats = {}
    for aspect in order:
        either = [b for b in businesses
                  if aspect in by_biz_a[b] or aspect in by_biz_b[b]]
        occurrence = 100.0 * len(either) / n
        if either:
            both = sum(1 for b in either
                       if aspect in by_biz_a[b] and aspect in by_biz_b[b])
            agreement = 100.0 * both / len(either)
        else:
            agreement = None
        stats[aspect] = (occurrence, agreement)
    return stats


def write_agreement_csv(stats: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("aspect,occurrence_pct,agreement_pct\n")
        for aspect, (occ, agr) in stats.items():
            agr_cell = "" if agr is None else repr(agr)
            fh.write(f"{aspect},{occ!r},{agr_cell}\n")

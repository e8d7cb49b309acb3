"""Yelp-format corpus ingestion: parse, join, filter, sample.

Reviews and businesses arrive as JSON-lines files matching the public Yelp
Open Dataset layout. The join builds an in-memory business index first and
then streams the review file once, keeping only reviews whose business
lists a restaurant category. Malformed lines are tolerated up to 1% per
file; anything past that aborts the run.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .config import ASPECTS, CANONICAL_CUISINES
from .errors import DataError

NA = None  # aspect label value for "not mentioned"


@dataclass(frozen=True, slots=True)
class Review:
    review_id: str
    user_id: str
    business_id: str
    stars: int
    text: str
    date: str


@dataclass(frozen=True, slots=True)
class Business:
    business_id: str
    name: str
    address: str
    city: str
    state: str
    postal_code: str
    overall_rating: float
    review_count: int
    categories: str


@dataclass(frozen=True, slots=True)
class CorpusRecord:
    review_id: str
    user_id: str
    business_id: str
    stars: int
    text: str
    date: str
    state: str
    overall_rating: float
    cuisine: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "review_id": self.review_id,
                "user_id": self.user_id,
                "business_id": self.business_id,
                "stars": self.stars,
                "text": self.text,
                "date": self.date,
                "state": self.state,
                "overall_rating": self.overall_rating,
                "cuisine": self.cuisine,
            },
            ensure_ascii=True,
            sort_keys=False,
            separators=(",", ":"),
        )


@dataclass(frozen=True, slots=True)
class AspectLabelSet:
    review_id: str
    labels: dict  # aspect -> -1 | 0 | 1 | None (None = NA)

    def __getitem__(self, aspect: str):
        return self.labels[aspect]


@dataclass
class ParseDiagnostics:
    review_lines: int = 0
    business_lines: int = 0
    malformed_review_lines: int = 0
    malformed_business_lines: int = 0
    unknown_business: int = 0
    not_restaurant: int = 0
    emitted: int = 0
    missing_state: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


LABEL_HEADER = ["review_id"] + list(ASPECTS)

_RESTAURANT_RE = re.compile(r"restaurant", re.IGNORECASE)


# ---------------------------------------------------------------------------
# cuisine normalization

def _load_alias_table() -> list[tuple[str, str]]:
    src = resources.files("absa").joinpath("data/cuisine_aliases.tsv")
    rows = []
    with resources.as_file(src) as p, open(p, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            alias, _, canonical = line.partition("\t")
            rows.append((alias.lower(), canonical))
    return rows


_ALIASES: list[tuple[str, str]] | None = None
_ALIAS_RES: list[tuple[re.Pattern, str, str]] | None = None


def _alias_patterns() -> list[tuple[re.Pattern, str, str]]:
    global _ALIASES, _ALIAS_RES
    if _ALIAS_RES is None:
        _ALIASES = _load_alias_table()
        _ALIAS_RES = [
            (re.compile(r"(?<![a-z0-9])" + re.escape(alias) + r"(?![a-z0-9])"), alias, canonical)
            for alias, canonical in _ALIASES
        ]
    return _ALIAS_RES


def normalize_cuisine(categories: str) -> str:
    """Map a raw comma-separated category string to a canonical cuisine.

    The first listed category containing a known alias wins; within one
    category segment the earliest alias match wins, longer aliases taking
    precedence on offset ties. Unmatched input maps to "Other".
    """
    if not categories:
        return "Other"
    patterns = _alias_patterns()
    for segment in categories.split(","):
        seg = segment.strip().lower()
        if not seg:
            continue
        best = None  # (offset, -len(alias), canonical)
        for pat, alias, canonical in patterns:
            m = pat.search(seg)
            if m is not None:
                key = (m.start(), -len(alias))
                if best is None or key < best[0]:
                    best = (key, canonical)
        if best is not None:
            return best[1]
    return "Other"


# ---------------------------------------------------------------------------
# parsing

def _parse_business_line(line: str) -> Business | None:
    obj = json.loads(line)
    bid = obj["business_id"]
    if not isinstance(bid, str) or not bid:
        raise ValueError("bad business_id")
    rating = float(obj["stars"])
    if not (1.0 <= rating <= 5.0):
        raise ValueError("overall_rating out of range")
    review_count = int(obj.get("review_count", 0))
    if review_count < 0:
        raise ValueError("negative review_count")
    return Business(
        business_id=bid,
        name=obj.get("name") or "",
        address=obj.get("address") or "",
        city=obj.get("city") or "",
        state=obj.get("state") or "",
        postal_code=obj.get("postal_code") or "",
        overall_rating=rating,
        review_count=review_count,
        categories=obj.get("categories") or "",
    )


def _parse_review_line(line: str) -> Review:
    obj = json.loads(line)
    rid = obj["review_id"]
    if not isinstance(rid, str) or not rid:
        raise ValueError("bad review_id")
    stars_raw = obj["stars"]
    stars = int(stars_raw)
    if stars != stars_raw or stars not in (1, 2, 3, 4, 5):
        raise ValueError("stars out of range")
    return Review(
        review_id=rid,
        user_id=obj.get("user_id") or "",
        business_id=obj["business_id"],
        stars=stars,
        text=obj.get("text") or "",
        date=obj.get("date") or "",
    )


def load_business_index(business_path: str | Path,
                        diagnostics: ParseDiagnostics | None = None) -> dict[str, Business]:
    diag = diagnostics if diagnostics is not None else ParseDiagnostics()
    index: dict[str, Business] = {}
    with open(business_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            diag.business_lines += 1
            try:
                biz = _parse_business_line(line)
            except (ValueError, KeyError, TypeError, json.JSONDecodeError):
                diag.malformed_business_lines += 1
                continue
            index[biz.business_id] = biz
    _check_malformed(diag.malformed_business_lines, diag.business_lines, business_path)
    return index


def _check_malformed(bad: int, total: int, path) -> None:
    if total and bad / total > 0.01:
        raise DataError(
            f"{path}: {bad} of {total} lines malformed (>1% tolerance)")


def parse_corpus(reviews_path: str | Path, business_path: str | Path,
                 diagnostics: ParseDiagnostics | None = None) -> Iterator[CorpusRecord]:
    """Stream joined restaurant reviews from Yelp-format JSONL files.

    Businesses whose categories lack a restaurant marker are dropped, as
    are reviews pointing at unknown businesses. Both files tolerate up to
    1% malformed lines. Businesses with a missing state are surfaced under
    the region code "??" and counted in the diagnostics.
    """
    reviews_path = Path(reviews_path)
    business_path = Path(business_path)
    for p in (reviews_path, business_path):
        if not p.exists():
            raise DataError(f"input file not found: {p}")
    diag = diagnostics if diagnostics is not None else ParseDiagnostics()
    index = load_business_index(business_path, diag)
    cuisine_cache: dict[str, str] = {}
    restaurant_cache: dict[str, bool] = {}
    with open(reviews_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            diag.review_lines += 1
            try:
                rev = _parse_review_line(line)
            except (ValueError, KeyError, TypeError, json.JSONDecodeError):
                diag.malformed_review_lines += 1
                continue
            biz = index.get(rev.business_id)
            if biz is None:
                diag.unknown_business += 1
                continue
            is_rest = restaurant_cache.get(biz.business_id)
            if is_rest is None:
                is_rest = bool(_RESTAURANT_RE.search(biz.categories))
                restaurant_cache[biz.business_id] = is_rest
            if not is_rest:
                diag.not_restaurant += 1
                continue
            cuisine = cuisine_cache.get(biz.business_id)
            if cuisine is None:
                cuisine = normalize_cuisine(biz.categories)
                cuisine_cache[biz.business_id] = cuisine
            state = biz.state or "??"
            if state == "??":
                diag.missing_state += 1
            diag.emitted += 1
            yield CorpusRecord(
                review_id=rev.review_id,
                user_id=rev.user_id,
                business_id=rev.business_id,
                stars=rev.stars,
                text=rev.text,
                date=rev.date,
                state=state,
                overall_rating=biz.overall_rating,
                cuisine=cuisine,
            )
    _check_malformed(diag.malformed_review_lines, diag.review_lines, reviews_path)


def write_corpus(records: Iterable[CorpusRecord], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")
            n += 1
    return n


def read_corpus(path: str | Path) -> Iterator[CorpusRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                yield CorpusRecord(**obj)
            except (TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{i + 1}: bad corpus record ({exc})") from exc


class CorpusFile:
    """Re-iterable view over a corpus JSONL file (for multi-pass consumers)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def __iter__(self) -> Iterator[CorpusRecord]:
        return read_corpus(self.path)


# ---------------------------------------------------------------------------
# corpus statistics

def corpus_stats(corpus: Iterable[CorpusRecord]) -> dict:
    """Counts, per-state totals, rating means, and the cuisine share table.

    The mean business rating is unweighted over distinct businesses; the
    cuisine share table is likewise over businesses and sums to 100%.
    Means are reported as None on an empty corpus.
    """
    n_reviews = 0
    users: set[str] = set()
    biz_rating: dict[str, float] = {}
    biz_cuisine: dict[str, str] = {}
    per_state: dict[str, int] = {}
    star_sum = 0
    for rec in corpus:
        n_reviews += 1
        star_sum += rec.stars
        users.add(rec.user_id)
        biz_rating[rec.business_id] = rec.overall_rating
        biz_cuisine[rec.business_id] = rec.cuisine
        per_state[rec.state] = per_state.get(rec.state, 0) + 1
    n_biz = len(biz_rating)
    cuisine_counts = {c: 0 for c in CANONICAL_CUISINES}
    for c in biz_cuisine.values():
        cuisine_counts[c] += 1
    shares = {
        c: (100.0 * k / n_biz if n_biz else 0.0) for c, k in cuisine_counts.items()
    }
    return {
        "n_reviews": n_reviews,
        "n_users": len(users),
        "n_businesses": n_biz,
        "mean_review_rating": (star_sum / n_reviews) if n_reviews else None,
        "mean_business_rating": (sum(biz_rating.values()) / n_biz) if n_biz else None,
        "reviews_per_state": dict(sorted(per_state.items())),
        "cuisine_counts": cuisine_counts,
        "cuisine_share_pct": shares,
    }


# ---------------------------------------------------------------------------
# sampling

def _business_stream_seed(seed: int, business_id: str) -> np.random.SeedSequence:
    h = int.from_bytes(hashlib.sha256(business_id.encode("utf-8")).digest()[:8], "big")
    return np.random.SeedSequence((seed & 0xFFFFFFFFFFFFFFFF, h))


def sample_reviews(corpus: Iterable[CorpusRecord], strategy: dict, seed: int) -> list[CorpusRecord]:
    """Draw a reproducible sample.

    strategy is {"kind": "uniform", "n": N} or
    {"kind": "per_business", "businesses": K, "per": M, "state": code|None}.
    Sampling is without replacement; insufficient populations raise a
    DataError naming the shortfall. Per-business draws use a substream
    derived from the business id, so the result does not depend on the
    order businesses appear in the corpus.
    """
    records = list(corpus)
    kind = strategy.get("kind")
    if kind == "uniform":
        n = int(strategy["n"])
        if n > len(records):
            raise DataError(f"requested {n} reviews but corpus has {len(records)}")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        idx = rng.permutation(len(records))[:n]
        return [records[i] for i in idx]
    if kind == "per_business":
        k = int(strategy["businesses"])
        m = int(strategy["per"])
        state = strategy.get("state")
        by_biz: dict[str, list[CorpusRecord]] = {}
        for rec in records:
            if state is not None and rec.state != state:
                continue
            by_biz.setdefault(rec.business_id, []).append(rec)
        candidates = sorted(b for b, revs in by_biz.items() if len(revs) >= m)
        if len(candidates) < k:
            where = f" in state {state}" if state is not None else ""
            raise DataError(
                f"need {k} businesses with >= {m} reviews{where}, found {len(candidates)}")
        master = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        chosen = [candidates[i] for i in master.choice(len(candidates), size=k, replace=False)]
        out: list[CorpusRecord] = []
        for bid in chosen:
            revs = sorted(by_biz[bid], key=lambda r: r.review_id)
            sub = np.random.Generator(np.random.PCG64(_business_stream_seed(seed, bid)))
            take = sub.choice(len(revs), size=m, replace=False)
            out.extend(revs[i] for i in take)
        return out
    raise DataError(f"unknown sampling strategy: {kind!r}")


# ---------------------------------------------------------------------------
# labels

def load_labels(path: str | Path) -> list[AspectLabelSet]:
    """Read the aspect label CSV (values -1, 0, 1 or the literal NA)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    out: list[AspectLabelSet] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty label file (missing header)") from None
        if header != LABEL_HEADER:
            raise DataError(
                f"{path}: bad header {header!r}, expected {LABEL_HEADER!r}")
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LABEL_HEADER):
                raise DataError(f"{path}: row {rownum} has {len(row)} fields")
            rid = row[0]
            if rid in seen:
                raise DataError(f"{path}: duplicate review_id {rid!r} at row {rownum}")
            seen.add(rid)
            labels = {}
            for aspect, cell in zip(ASPECTS, row[1:]):
                if cell == "NA":
                    labels[aspect] = NA
                elif cell in ("-1", "0", "1"):
                    labels[aspect] = int(cell)
                else:
                    raise DataError(
                        f"{path}: invalid label {cell!r} at row {rownum}, column {aspect}")
            out.append(AspectLabelSet(review_id=rid, labels=labels))
    return out


def write_labels(label_sets: Iterable[AspectLabelSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABEL_HEADER)
        for ls in label_sets:
            row = [ls.review_id]
            for aspect in ASPECTS:
                v = ls.labels[aspect]
                row.append("NA" if v is NA else str(v))
            writer.writerow(row)

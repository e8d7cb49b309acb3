"""Synthetic review corpus with known per-aspect ground truth.

Every review draws an independent polarity in {absent, -1, 0, +1} for each
of the six aspects (probability 1/4 each), renders one sentence per
non-absent aspect from a template bank, and scores

    stars = clamp(round(3 + sum_a w_a * s_a + eps), 1, 5)

with absent aspects contributing 0 and eps ~ Normal(0, sigma). The default
bank keeps the vocabularies of all (aspect, polarity) cells disjoint so
relevance and sentiment are both learnable from word identity alone; the
overlap bank shares sentiment words across aspects to stress classifiers.

Output is the same JSON-lines and CSV shapes the ingest module consumes,
plus a ground-truth JSON with the generating weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ASPECTS
from .errors import DataError
from .ingest import write_labels, AspectLabelSet

POLARITIES = ("absent", -1, 0, 1)

_STATES = ("PA", "FL", "TN", "IN", "MO", "LA", "AZ", "NJ", "NV", "AB")
_CUISINES = ("American (Traditional)", "Italian", "Mexican", "Chinese",
             "Japanese", "Thai", "Indian", "Mediterranean")

# one marker noun per aspect (shared by all its cells) plus two words unique
# to each (aspect, polarity) cell
_MARKERS = {
    "service": "staff",
    "food_quality": "food",
    "ambiance": "decor",
    "wait_time": "wait",
    "price": "price",
    "menu_variety": "menu",
}

_CELL_WORDS = {
    ("service", 1): ("friendly", "welcoming"),
    ("service", 0): ("adequate", "unremarkable"),
    ("service", -1): ("rude", "hostile"),
    ("food_quality", 1): ("delicious", "flavorful"),
    ("food_quality", 0): ("edible", "passable"),
    ("food_quality", -1): ("bland", "stale"),
    ("ambiance", 1): ("cozy", "charming"),
    ("ambiance", 0): ("plain", "unadorned"),
    ("ambiance", -1): ("noisy", "cramped"),
    ("wait_time", 1): ("quick", "prompt"),
    ("wait_time", 0): ("tolerable", "middling"),
    ("wait_time", -1): ("slow", "endless"),
    ("price", 1): ("cheap", "bargain"),
    ("price", 0): ("moderate", "unsurprising"),
    ("price", -1): ("expensive", "overpriced"),
    ("menu_variety", 1): ("extensive", "varied"),
    ("menu_variety", 0): ("conventional", "predictable"),
    ("menu_variety", -1): ("narrow", "meager"),
}

# shared pools for the stress bank
_OVERLAP_WORDS = {1: ("wonderful", "fantastic"), 0: ("acceptable", "routine"),
                  -1: ("awful", "dreadful")}

_OPENERS = (
    "Stopped by this spot last weekend with a couple of friends.",
    "Dropped in for dinner after work on a whim.",
    "Finally tried this place everyone keeps mentioning.",
    "Second visit here, first was about a month ago.",
)


def default_bank(overlap: bool = False) -> dict:
    """Template bank keyed by (aspect, polarity); absent cells render nothing."""
    bank = {}
    for aspect in ASPECTS:
        marker = _MARKERS[aspect]
        for pol in (-1, 0, 1):
            w1, w2 = _OVERLAP_WORDS[pol] if overlap else _CELL_WORDS[(aspect, pol)]
            bank[(aspect, pol)] = [
                f"The {marker} was {w1}.",
                f"Honestly the {marker} seemed {w2}.",
                f"Found the {marker} {w1} and {w2}.",
            ]
        bank[(aspect, "absent")] = [""]
    return bank


@dataclass
class SynthSpec:
    n_businesses: int = 50
    reviews_per_business: int = 40
    weights: dict = field(default_factory=lambda: {
        "service": 0.7, "food_quality": 1.5, "ambiance": 0.3,
        "wait_time": 0.3, "price": 0.3, "menu_variety": 0.3})
    sigma: float = 0.1
    seed: int = 0
    templates: dict | None = None   # (aspect, polarity) -> list of sentences
    opener_prob: float = 0.5

    def bank(self) -> dict:
        return self.templates if self.templates is not None else default_bank()

    def validate(self) -> None:
        if self.n_businesses < 1 or self.reviews_per_business < 1:
            raise DataError("n_businesses and reviews_per_business must be positive")
        if self.sigma < 0:
            raise DataError("sigma must be non-negative")
        for a in ASPECTS:
            w = self.weights.get(a)
            if w is None or not math.isfinite(w):
                raise DataError(f"weight for {a} missing or not finite")
        bank = self.bank()
        for a in ASPECTS:
            for pol in POLARITIES:
                cell = bank.get((a, pol))
                if not cell:
                    raise DataError(f"empty template bank cell ({a}, {pol})")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate(spec: SynthSpec, out_dir: str | Path) -> dict:
    """Write reviews.jsonl, businesses.jsonl, labels.csv and truth.json.

    Returns the path dict. Byte-identical for a fixed spec.
    """
    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    bank = spec.bank()
    weights = np.array([spec.weights[a] for a in ASPECTS])
    n_users = max(2, spec.n_businesses * 2)

    reviews_path = out_dir / "reviews.jsonl"
    businesses_path = out_dir / "businesses.jsonl"
    labels_path = out_dir / "labels.csv"
    truth_path = out_dir / "truth.json"

    label_sets = []
    review_no = 0
    with open(reviews_path, "w", encoding="utf-8", newline="\n") as rfh, \
         open(businesses_path, "w", encoding="utf-8", newline="\n") as bfh:
        for b in range(spec.n_businesses):
            business_id = f"synthb{b:05d}"
            stars_acc = 0
            for _ in range(spec.reviews_per_business):
                review_id = f"synthr{review_no:07d}"
                pol_draw = rng.integers(0, 4, size=len(ASPECTS))
                polarities = [POLARITIES[v] for v in pol_draw]
                sentences = []
                if rng.random() < spec.opener_prob:
                    sentences.append(_OPENERS[int(rng.integers(0, len(_OPENERS)))])
                signal = 0.0
                for a, aspect in enumerate(ASPECTS):
                    pol = polarities[a]
                    cell = bank[(aspect, pol)]
                    text = cell[int(rng.integers(0, len(cell)))]
                    if text:
                        sentences.append(text)
                    if pol != "absent":
                        signal += weights[a] * pol
                eps = rng.normal(0.0, spec.sigma)
                stars = min(5, max(1, _round_half_up(3.0 + signal + eps)))
                stars_acc += stars
                user = int(rng.integers(0, n_users))
                date = f"2023-{1 + review_no % 12:02d}-{1 + review_no % 28:02d}"
                rfh.write(json.dumps({
                    "review_id": review_id,
                    "user_id": f"synthu{user:05d}",
                    "business_id": business_id,
                    "stars": stars,
                    "useful": 0, "funny": 0, "cool": 0,
                    "text": " ".join(sentences),
                    "date": f"{date} 00:00:00",
                }, ensure_ascii=False) + "\n")
                label_sets.append(AspectLabelSet(
                    review_id=review_id,
                    labels={a: (None if p == "absent" else p)
                            for a, p in zip(ASPECTS, polarities)}))
                review_no += 1
            mean_stars = stars_acc / spec.reviews_per_business
            overall = math.floor(mean_stars * 2.0 + 0.5) / 2.0
            # Independent draws; cycling both by index ties cuisine parity to
            # state parity, which makes the joint fixed-effects design singular.
            cuisine = _CUISINES[int(rng.integers(0, len(_CUISINES)))]
            state = _STATES[int(rng.integers(0, len(_STATES)))]
            bfh.write(json.dumps({
                "business_id": business_id,
                "name": f"Synth Kitchen {b}",
                "address": f"{100 + b} Main St",
                "city": "Springfield",
                "state": state,
                "postal_code": "00000",
                "stars": overall,
                "review_count": spec.reviews_per_business,
                "is_open": 1,
                "categories": f"{cuisine}, Restaurants",
            }, ensure_ascii=False) + "\n")

    write_labels(label_sets, labels_path)
    truth = {
        "weights": {a: float(spec.weights[a]) for a in ASPECTS},
        "sigma": float(spec.sigma),
        "seed": int(spec.seed),
        "n_businesses": int(spec.n_businesses),
        "reviews_per_business": int(spec.reviews_per_business),
        "polarity_probabilities": {str(p): 0.25 for p in POLARITIES},
    }
    with open(truth_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"reviews": reviews_path, "businesses": businesses_path,
            "labels": labels_path, "truth": truth_path}

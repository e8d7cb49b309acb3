import json
import math

import pytest

from absa.config import ASPECTS
from absa.errors import DataError
from absa.ingest import ParseDiagnostics, load_labels, parse_corpus
from absa.regress import aggregate_rows, encode_design_matrix, fit_ols
from absa.testkit import _MARKERS, POLARITIES, SynthSpec, default_bank, generate

_SCAFFOLD = {"the", "was", "honestly", "seemed", "found", "and"}


def _cell_tokens(bank, aspect, pol):
    words = set()
    for sentence in bank[(aspect, pol)]:
        words.update(w.strip(".").lower() for w in sentence.split())
    return words - _SCAFFOLD - {_MARKERS[aspect]}


def _load(out_dir):
    recs = list(parse_corpus(out_dir / "reviews.jsonl", out_dir / "businesses.jsonl",
                             diagnostics=ParseDiagnostics()))
    labels = load_labels(out_dir / "labels.csv")
    return recs, labels


# ---------------------------------------------------------------------------
# spec validation


def test_spec_validation_errors():
    with pytest.raises(DataError, match="positive"):
        SynthSpec(n_businesses=0).validate()
    with pytest.raises(DataError, match="positive"):
        SynthSpec(reviews_per_business=0).validate()
    with pytest.raises(DataError, match="sigma"):
        SynthSpec(sigma=-0.1).validate()
    bad_weights = {a: 1.0 for a in ASPECTS}
    bad_weights.pop("price")
    with pytest.raises(DataError, match="price"):
        SynthSpec(weights=bad_weights).validate()
    broken = default_bank()
    broken[("service", 1)] = []
    with pytest.raises(DataError, match="template bank"):
        SynthSpec(templates=broken).validate()
    SynthSpec().validate()


# ---------------------------------------------------------------------------
# template bank vocabulary structure


def test_default_bank_cells_disjoint():
    bank = default_bank()
    cells = [(a, p) for a in ASPECTS for p in (-1, 0, 1)]
    for i, c1 in enumerate(cells):
        for c2 in cells[i + 1:]:
            t1 = _cell_tokens(bank, *c1)
            t2 = _cell_tokens(bank, *c2)
            assert not (t1 & t2), f"{c1} and {c2} share {t1 & t2}"
    for a in ASPECTS:
        assert bank[(a, "absent")] == [""]


def test_overlap_bank_shares_sentiment_words():
    bank = default_bank(overlap=True)
    pos_service = _cell_tokens(bank, "service", 1)
    pos_price = _cell_tokens(bank, "price", 1)
    assert pos_service == pos_price
    assert _cell_tokens(bank, "service", 1) != _cell_tokens(bank, "service", -1)


# ---------------------------------------------------------------------------
# generation


def test_generate_byte_determinism(tmp_path):
    spec = SynthSpec(n_businesses=8, reviews_per_business=5, seed=21)
    pa = generate(spec, tmp_path / "a")
    pb = generate(SynthSpec(n_businesses=8, reviews_per_business=5, seed=21),
                  tmp_path / "b")
    for key in ("reviews", "businesses", "labels", "truth"):
        assert pa[key].read_bytes() == pb[key].read_bytes()
    pc = generate(SynthSpec(n_businesses=8, reviews_per_business=5, seed=22),
                  tmp_path / "c")
    assert pa["reviews"].read_bytes() != pc["reviews"].read_bytes()


def test_generate_counts_and_label_alignment(tmp_path):
    spec = SynthSpec(n_businesses=6, reviews_per_business=7, seed=5)
    generate(spec, tmp_path)
    recs, labels = _load(tmp_path)
    assert len(recs) == 42
    assert len({r.business_id for r in recs}) == 6
    assert [ls.review_id for ls in labels] == [r.review_id for r in recs]


def test_markers_present_iff_labeled(tmp_path):
    generate(SynthSpec(n_businesses=5, reviews_per_business=8, seed=9), tmp_path)
    recs, labels = _load(tmp_path)
    for rec, ls in zip(recs, labels):
        words = {w.strip(".").lower() for w in rec.text.split()}
        for aspect in ASPECTS:
            marker = _MARKERS[aspect]
            if ls.labels[aspect] is None:
                assert marker not in words
            else:
                assert marker in words


def test_stars_formula_noiseless(tmp_path):
    spec = SynthSpec(n_businesses=10, reviews_per_business=6, sigma=0.0, seed=13)
    generate(spec, tmp_path)
    recs, labels = _load(tmp_path)
    truth = json.loads((tmp_path / "truth.json").read_text())
    w = truth["weights"]
    for rec, ls in zip(recs, labels):
        signal = sum(w[a] * ls.labels[a] for a in ASPECTS
                     if ls.labels[a] is not None)
        expected = min(5, max(1, int(math.floor(3.0 + signal + 0.5))))
        assert rec.stars == expected


def test_overall_rating_half_star_rounding(tmp_path):
    generate(SynthSpec(n_businesses=7, reviews_per_business=9, seed=3), tmp_path)
    recs, _ = _load(tmp_path)
    by_biz = {}
    for rec in recs:
        by_biz.setdefault(rec.business_id, []).append(rec)
    for biz_recs in by_biz.values():
        mean = sum(r.stars for r in biz_recs) / len(biz_recs)
        expected = math.floor(mean * 2.0 + 0.5) / 2.0
        assert all(r.overall_rating == expected for r in biz_recs)


def test_truth_json_contents(tmp_path):
    spec = SynthSpec(n_businesses=4, reviews_per_business=3, sigma=0.2, seed=17)
    generate(spec, tmp_path)
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["weights"] == {a: spec.weights[a] for a in ASPECTS}
    assert truth["sigma"] == 0.2
    assert truth["seed"] == 17
    assert truth["n_businesses"] == 4
    assert truth["reviews_per_business"] == 3
    assert truth["polarity_probabilities"] == {str(p): 0.25 for p in POLARITIES}


def test_fixed_effects_design_full_rank(tmp_path):
    """Cuisine and state assignments must not be collinear."""
    generate(SynthSpec(n_businesses=60, reviews_per_business=6, seed=2), tmp_path)
    recs, labels = _load(tmp_path)
    rows = [(ls.review_id,
             {a: (0 if ls.labels[a] is None else ls.labels[a]) for a in ASPECTS})
            for ls in labels]
    aggs = aggregate_rows(rows, recs)
    assert len(aggs) == 60
    X, y, names, _ = encode_design_matrix(aggs, 4)
    assert any(nm.startswith("cuisine[") for nm in names)
    assert any(nm.startswith("state[") for nm in names)
    fit_ols(X, y, names)   # raises on rank deficiency


def test_overlap_templates_generate(tmp_path):
    spec = SynthSpec(n_businesses=3, reviews_per_business=4, seed=1,
                     templates=default_bank(overlap=True))
    generate(spec, tmp_path)
    recs, labels = _load(tmp_path)
    assert len(recs) == 12
    text = " ".join(r.text for r in recs).lower()
    assert any(w in text for w in ("wonderful", "awful", "acceptable"))

import json

import pytest
from hypothesis import given, settings, strategies as st

from absa.errors import DataError
from absa.ingest import (AspectLabelSet, CorpusFile, ParseDiagnostics,
                         corpus_stats, load_labels, normalize_cuisine,
                         parse_corpus, read_corpus, sample_reviews,
                         write_corpus, write_labels)
from absa.config import ASPECTS

from conftest import make_record


def _biz(bid="b1", categories="Italian, Restaurants", state="PA", stars=4.0):
    return {"business_id": bid, "name": "X", "address": "", "city": "",
            "state": state, "postal_code": "", "stars": stars,
            "review_count": 3, "is_open": 1, "categories": categories}


def _rev(rid="r1", bid="b1", stars=4, text="great"):
    return {"review_id": rid, "user_id": "u1", "business_id": bid,
            "stars": stars, "useful": 0, "funny": 0, "cool": 0,
            "text": text, "date": "2019-01-01 00:00:00"}


def _write(path, objs):
    with open(path, "w") as fh:
        for o in objs:
            fh.write(json.dumps(o) + "\n")


def test_parse_joins_reviews_to_businesses(tmp_path):
    _write(tmp_path / "b.jsonl", [_biz()])
    _write(tmp_path / "r.jsonl", [_rev("r1"), _rev("r2", stars=2)])
    diag = ParseDiagnostics()
    recs = list(parse_corpus(tmp_path / "r.jsonl", tmp_path / "b.jsonl", diag))
    assert [r.review_id for r in recs] == ["r1", "r2"]
    assert recs[0].state == "PA"
    assert recs[0].cuisine == "Italian"
    assert recs[0].overall_rating == 4.0
    assert diag.emitted == 2


def test_parse_drops_non_restaurants_and_unknown_businesses(tmp_path):
    _write(tmp_path / "b.jsonl", [_biz("b1"), _biz("b2", categories="Nail Salons")])
    _write(tmp_path / "r.jsonl", [_rev("r1", "b1"), _rev("r2", "b2"), _rev("r3", "zz")])
    diag = ParseDiagnostics()
    recs = list(parse_corpus(tmp_path / "r.jsonl", tmp_path / "b.jsonl", diag))
    assert [r.review_id for r in recs] == ["r1"]
    assert diag.not_restaurant == 1
    assert diag.unknown_business == 1


def test_parse_counts_malformed_lines_within_tolerance(tmp_path):
    reviews = [_rev(f"r{i}") for i in range(200)]
    _write(tmp_path / "b.jsonl", [_biz()])
    with open(tmp_path / "r.jsonl", "w") as fh:
        for o in reviews:
            fh.write(json.dumps(o) + "\n")
        fh.write("{not json\n")
    diag = ParseDiagnostics()
    recs = list(parse_corpus(tmp_path / "r.jsonl", tmp_path / "b.jsonl", diag))
    assert len(recs) == 200
    assert diag.malformed_review_lines == 1


def test_parse_rejects_over_one_percent_malformed(tmp_path):
    _write(tmp_path / "b.jsonl", [_biz()])
    with open(tmp_path / "r.jsonl", "w") as fh:
        fh.write(json.dumps(_rev()) + "\n")
        fh.write("garbage\n")
    with pytest.raises(DataError, match="malformed"):
        list(parse_corpus(tmp_path / "r.jsonl", tmp_path / "b.jsonl"))


def test_parse_missing_file_error_names_path(tmp_path):
    _write(tmp_path / "b.jsonl", [_biz()])
    with pytest.raises(DataError, match="nope.jsonl"):
        list(parse_corpus(tmp_path / "nope.jsonl", tmp_path / "b.jsonl"))


def test_missing_state_becomes_question_marks(tmp_path):
    _write(tmp_path / "b.jsonl", [_biz(state="")])
    _write(tmp_path / "r.jsonl", [_rev()])
    diag = ParseDiagnostics()
    recs = list(parse_corpus(tmp_path / "r.jsonl", tmp_path / "b.jsonl", diag))
    assert recs[0].state == "??"
    assert diag.missing_state == 1


def test_bad_stars_is_malformed(tmp_path):
    _write(tmp_path / "b.jsonl", [_biz()])
    reviews = [_rev(f"r{i}") for i in range(300)]
    reviews.append(_rev("rbad", stars=6))
    reviews.append(_rev("rhalf", stars=3.5))
    _write(tmp_path / "r.jsonl", reviews)
    diag = ParseDiagnostics()
    recs = list(parse_corpus(tmp_path / "r.jsonl", tmp_path / "b.jsonl", diag))
    assert len(recs) == 300
    assert diag.malformed_review_lines == 2


def test_normalize_cuisine():
    assert normalize_cuisine("Italian, Restaurants") == "Italian"
    assert normalize_cuisine("Restaurants, Mexican") == "Mexican"
    assert normalize_cuisine("American (Traditional), Restaurants") == "American"
    assert normalize_cuisine("American (New), Bars") == "American"
    assert normalize_cuisine("Sushi Bars, Restaurants") == "Japanese"
    assert normalize_cuisine("Vegan, Restaurants") == "Other"
    assert normalize_cuisine("") == "Other"


def test_corpus_roundtrip(tmp_path):
    recs = [make_record(review_id=f"r{i}", text=f"text {i}") for i in range(5)]
    path = tmp_path / "c.jsonl"
    assert write_corpus(recs, path) == 5
    back = list(read_corpus(path))
    assert back == recs
    # CorpusFile supports repeated iteration
    cf = CorpusFile(path)
    assert list(cf) == list(cf)


def test_corpus_stats_counts():
    recs = [
        make_record("r1", "b1", stars=5, state="PA"),
        make_record("r2", "b1", stars=3, state="PA"),
        make_record("r3", "b2", stars=1, state="FL", cuisine="Mexican",
                    overall_rating=2.0, user_id="u9"),
    ]
    s = corpus_stats(recs)
    assert s["n_reviews"] == 3
    assert s["n_businesses"] == 2
    assert s["n_users"] == 2
    assert s["reviews_per_state"] == {"FL": 1, "PA": 2}
    assert s["mean_review_rating"] == pytest.approx(3.0)
    assert s["mean_business_rating"] == pytest.approx(3.0)
    assert s["cuisine_counts"]["Italian"] == 1
    assert s["cuisine_counts"]["Mexican"] == 1
    assert sum(s["cuisine_share_pct"].values()) == pytest.approx(100.0)


def test_corpus_stats_empty_corpus_undefined_means():
    s = corpus_stats([])
    assert s["n_reviews"] == 0
    assert s["mean_review_rating"] is None
    assert s["mean_business_rating"] is None


def test_uniform_sample_deterministic_and_exact():
    recs = [make_record(review_id=f"r{i:03d}") for i in range(40)]
    a = sample_reviews(recs, {"kind": "uniform", "n": 10}, seed=5)
    b = sample_reviews(recs, {"kind": "uniform", "n": 10}, seed=5)
    assert a == b
    assert len(a) == 10
    assert len({r.review_id for r in a}) == 10
    c = sample_reviews(recs, {"kind": "uniform", "n": 10}, seed=6)
    assert a != c


def test_uniform_sample_insufficient_population():
    recs = [make_record(review_id=f"r{i}") for i in range(3)]
    with pytest.raises(DataError, match="3"):
        sample_reviews(recs, {"kind": "uniform", "n": 10}, seed=0)


def test_per_business_sample_order_invariant():
    recs = []
    for b in range(6):
        for i in range(8):
            recs.append(make_record(review_id=f"b{b}r{i}", business_id=f"biz{b}"))
    strat = {"kind": "per_business", "businesses": 3, "per": 4, "state": None}
    fwd = sample_reviews(recs, strat, seed=9)
    rev = sample_reviews(list(reversed(recs)), strat, seed=9)
    assert sorted(r.review_id for r in fwd) == sorted(r.review_id for r in rev)
    assert len(fwd) == 12


def test_per_business_sample_state_filter():
    recs = [make_record(review_id=f"pa{i}", business_id="bp", state="PA") for i in range(5)]
    recs += [make_record(review_id=f"fl{i}", business_id="bf", state="FL") for i in range(5)]
    out = sample_reviews(recs, {"kind": "per_business", "businesses": 1,
                                "per": 3, "state": "FL"}, seed=1)
    assert all(r.state == "FL" for r in out)
    with pytest.raises(DataError, match="state PA"):
        sample_reviews(recs, {"kind": "per_business", "businesses": 2,
                              "per": 3, "state": "PA"}, seed=1)


def test_labels_roundtrip(tmp_path):
    sets = [
        AspectLabelSet("r1", {a: 1 for a in ASPECTS}),
        AspectLabelSet("r2", dict(zip(ASPECTS, [None, -1, 0, 1, None, 0]))),
    ]
    path = tmp_path / "labels.csv"
    write_labels(sets, path)
    back = load_labels(path)
    assert back == sets
    text = path.read_text()
    assert text.splitlines()[0] == "review_id," + ",".join(ASPECTS)
    assert "NA" in text


def test_labels_reject_bad_header(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("review_id,serviceX\nr1,1\n")
    with pytest.raises(DataError, match="header"):
        load_labels(p)


def test_labels_reject_duplicates_and_bad_values(tmp_path):
    head = "review_id," + ",".join(ASPECTS)
    p = tmp_path / "l.csv"
    p.write_text(head + "\nr1,1,1,1,1,1,1\nr1,0,0,0,0,0,0\n")
    with pytest.raises(DataError, match="duplicate"):
        load_labels(p)
    p.write_text(head + "\nr1,2,0,0,0,0,0\n")
    with pytest.raises(DataError, match="invalid label"):
        load_labels(p)


@given(st.lists(st.sampled_from([None, -1, 0, 1]), min_size=6, max_size=6))
@settings(max_examples=50, deadline=None)
def test_labels_roundtrip_property(tmp_path_factory, values):
    tmp = tmp_path_factory.mktemp("lbl")
    sets = [AspectLabelSet("rX", dict(zip(ASPECTS, values)))]
    write_labels(sets, tmp / "l.csv")
    assert load_labels(tmp / "l.csv") == sets


def test_synth_corpus_parses_cleanly(synth_dir, synth_records):
    assert len(synth_records) == 300
    labels = load_labels(synth_dir / "labels.csv")
    assert {ls.review_id for ls in labels} == {r.review_id for r in synth_records}

import json

import numpy as np
import pytest

from absa.errors import DataError
from absa.lda import (GROUP_ORDER, LdaModel, _pair_seed, fit_lda,
                      group_by_sentiment, joint_log_likelihood, lda_topic_table,
                      top_words, write_topic_table)
from conftest import make_record


def _two_vocab_docs(rng, n_docs=40, doc_len=15):
    vocab_a = [f"food{i}" for i in range(8)]
    vocab_b = [f"staff{i}" for i in range(8)]
    docs = []
    for d in range(n_docs):
        pool = vocab_a if d % 2 == 0 else vocab_b
        docs.append([pool[int(rng.integers(0, len(pool)))] for _ in range(doc_len)])
    return docs, set(vocab_a), set(vocab_b)


# ---------------------------------------------------------------------------
# grouping


def test_group_by_sentiment_partition():
    recs = [make_record("r0", "b0", stars=5), make_record("r1", "b0", stars=4),
            make_record("r2", "b0", stars=3), make_record("r3", "b1", stars=2),
            make_record("r4", "b1", stars=1)]
    groups = group_by_sentiment(recs)
    assert set(groups) == set(GROUP_ORDER)
    assert [r.review_id for r in groups["positive"]["b0"]] == ["r0", "r1"]
    assert [r.review_id for r in groups["neutral"]["b0"]] == ["r2"]
    assert [r.review_id for r in groups["negative"]["b1"]] == ["r3", "r4"]
    assert GROUP_ORDER == ("positive", "negative", "neutral")


# ---------------------------------------------------------------------------
# sampler invariants


@pytest.mark.parametrize("iterations", [0, 1, 25])
def test_count_conservation(rng, iterations):
    docs, _, _ = _two_vocab_docs(rng, n_docs=20)
    total = sum(len(d) for d in docs)
    model = fit_lda(docs, n_topics=3, iterations=iterations, seed=5)
    assert int(model.topic_word.sum()) == total
    assert int(model.doc_topic.sum()) == total
    np.testing.assert_array_equal(model.topic_word.sum(axis=1), model.topic_totals)
    np.testing.assert_array_equal(model.doc_topic.sum(axis=1), model.doc_lengths)
    assert model.assignments.min() >= 0
    assert model.assignments.max() < 3
    # assignments are the counts
    for t in range(3):
        assert int((model.assignments == t).sum()) == int(model.topic_totals[t])


def test_distributions_normalized(rng):
    docs, _, _ = _two_vocab_docs(rng, n_docs=16)
    model = fit_lda(docs, n_topics=4, iterations=10, seed=2)
    tw = model.topic_word_distributions()
    dt = model.doc_topic_distributions()
    np.testing.assert_allclose(tw.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(dt.sum(axis=1), 1.0, atol=1e-9)
    assert (tw > 0).all() and (dt > 0).all()


def test_two_vocab_purity(rng):
    docs, vocab_a, vocab_b = _two_vocab_docs(rng)
    model = fit_lda(docs, n_topics=2, iterations=150, seed=0)
    a_cols = [i for i, w in enumerate(model.vocab) if w in vocab_a]
    b_cols = [i for i, w in enumerate(model.vocab) if w in vocab_b]
    hit = sum(max(model.topic_word[t, a_cols].sum(), model.topic_word[t, b_cols].sum())
              for t in range(2))
    purity = hit / model.topic_word.sum()
    assert purity >= 0.9


def test_fit_determinism(rng):
    docs, _, _ = _two_vocab_docs(rng, n_docs=12)
    m1 = fit_lda(docs, n_topics=2, iterations=30, seed=9)
    m2 = fit_lda(docs, n_topics=2, iterations=30, seed=9)
    np.testing.assert_array_equal(m1.assignments, m2.assignments)
    np.testing.assert_array_equal(m1.topic_word, m2.topic_word)
    m3 = fit_lda(docs, n_topics=2, iterations=30, seed=10)
    assert not np.array_equal(m1.assignments, m3.assignments)


def test_likelihood_tracking_does_not_perturb_chain(rng):
    docs, _, _ = _two_vocab_docs(rng, n_docs=12)
    plain = fit_lda(docs, n_topics=2, iterations=20, seed=4)
    tracked = fit_lda(docs, n_topics=2, iterations=20, seed=4, likelihood_every=7)
    np.testing.assert_array_equal(plain.assignments, tracked.assignments)
    np.testing.assert_array_equal(plain.topic_word, tracked.topic_word)
    assert [s for s, _ in tracked.log_likelihood] == [7, 14, 20]
    assert plain.log_likelihood == []


def test_likelihood_improves_on_structured_corpus(rng):
    docs, _, _ = _two_vocab_docs(rng)
    init = fit_lda(docs, n_topics=2, iterations=0, seed=1)
    ll_init = joint_log_likelihood(init.doc_topic, init.topic_word,
                                   init.topic_totals, init.doc_lengths,
                                   init.alpha, init.beta)
    model = fit_lda(docs, n_topics=2, iterations=100, seed=1, likelihood_every=10)
    values = [ll for _, ll in model.log_likelihood]
    assert values[-1] > ll_init
    direct = joint_log_likelihood(model.doc_topic, model.topic_word,
                                  model.topic_totals, model.doc_lengths,
                                  model.alpha, model.beta)
    assert values[-1] == pytest.approx(direct)


def test_fit_errors():
    with pytest.raises(DataError, match="n_topics"):
        fit_lda([["a"]], n_topics=0)
    with pytest.raises(DataError, match="empty vocabulary"):
        fit_lda([[], []])


def test_top_words_ranking_and_ties():
    model = LdaModel(
        n_topics=2, alpha=0.1, beta=0.01, iterations=0, seed=0,
        vocab=["apple", "pear", "plum"],
        topic_word=np.array([[5, 2, 2], [0, 0, 7]], dtype=np.int64),
        doc_topic=np.zeros((1, 2), dtype=np.int64),
        topic_totals=np.array([9, 7], dtype=np.int64),
        assignments=np.zeros(16, dtype=np.int32),
        doc_lengths=np.array([16], dtype=np.int64),
    )
    ranked = top_words(model, k=3)
    assert [w for w, _ in ranked[0]] == ["apple", "pear", "plum"]  # tie pear/plum
    assert [w for w, _ in ranked[1]] == ["plum", "apple", "pear"]
    assert len(top_words(model, k=50)[0]) == 3
    probs = [p for _, p in ranked[0]]
    assert probs == sorted(probs, reverse=True)


# ---------------------------------------------------------------------------
# corpus orchestration


def _topic_corpus():
    recs = []
    texts = {"positive": "wonderful pizza amazing pasta delicious sauce",
             "negative": "terrible pizza awful pasta bland sauce",
             "neutral": "ordinary pizza average pasta plain sauce"}
    stars = {"positive": 5, "negative": 1, "neutral": 3}
    rid = 0
    for biz in ("b0", "b1"):
        for g, text in texts.items():
            for _ in range(3):
                recs.append(make_record(f"r{rid}", biz, stars=stars[g],
                                        text=text + f" visit{rid}"))
                rid += 1
    return recs


def test_topic_table_order_and_determinism():
    recs = _topic_corpus()
    rows = lda_topic_table(recs, n_topics=2, iterations=15, top_k=4, seed=3)
    assert [(r["group"], r["business_id"]) for r in rows] == [
        ("positive", "b0"), ("positive", "b1"),
        ("negative", "b0"), ("negative", "b1"),
        ("neutral", "b0"), ("neutral", "b1")]
    for row in rows:
        assert len(row["topics"]) == 2
        assert all(len(topic) <= 4 for topic in row["topics"])
    again = lda_topic_table(recs, n_topics=2, iterations=15, top_k=4, seed=3)
    assert again == rows


def test_topic_table_worker_invariance():
    recs = _topic_corpus()
    seq = lda_topic_table(recs, n_topics=2, iterations=15, seed=3, workers=1)
    par = lda_topic_table(recs, n_topics=2, iterations=15, seed=3, workers=4)
    assert seq == par


def test_topic_table_pooled_mode():
    recs = _topic_corpus()
    rows = lda_topic_table(recs, n_topics=2, iterations=15, seed=3,
                           per_restaurant=False)
    assert [r["group"] for r in rows] == list(GROUP_ORDER)
    assert all(r["business_id"] is None for r in rows)


def test_pair_seed_spread():
    base = _pair_seed(7, "positive", "b0")
    assert _pair_seed(7, "positive", "b0") == base
    assert _pair_seed(7, "negative", "b0") != base
    assert _pair_seed(7, "positive", "b1") != base
    assert _pair_seed(8, "positive", "b0") != base
    assert 0 <= base < (1 << 64)


def test_write_topic_table_jsonl(tmp_path):
    rows = lda_topic_table(_topic_corpus(), n_topics=2, iterations=10, seed=1)
    path = tmp_path / "topics.jsonl"
    write_topic_table(rows, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == len(rows)
    assert [json.loads(ln) for ln in lines] == rows

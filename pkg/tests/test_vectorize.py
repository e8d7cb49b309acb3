import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from absa.errors import DataError
from absa.vectorize import (EmbeddingModel, EmbeddingParams, XorShift64Star,
                            _XS_MULT, _xs_next, char_ngrams, embed_review,
                            fit_tfidf, fnv1a_32, load_embeddings, load_tfidf,
                            mix_seed, nearest_neighbors, save_embeddings,
                            save_tfidf, sgns_pair_grad, sgns_pair_loss,
                            train_embeddings, transform_tfidf,
                            transform_tfidf_many)

_MASK64 = 0xFFFFFFFFFFFFFFFF


# ---------------------------------------------------------------------------
# TF-IDF


def tfidf_oracle(corpus, max_features=400):
    """Brute-force fit+transform straight from the formula."""
    counts, df = {}, {}
    for doc in corpus:
        for t in doc:
            counts[t] = counts.get(t, 0) + 1
        for t in set(doc):
            df[t] = df.get(t, 0) + 1
    vocab = sorted(counts, key=lambda t: (-counts[t], t))[:max_features]
    n = len(corpus)
    idf = {t: math.log((1.0 + n) / (1.0 + df[t])) + 1.0 for t in vocab}
    rows = []
    for doc in corpus:
        vec = np.array([doc.count(t) * idf[t] for t in vocab])
        norm = np.linalg.norm(vec)
        rows.append(vec / norm if norm > 0 else vec)
    return vocab, np.array(rows)


def random_corpus(rng, max_docs=50):
    words = [f"w{i}" for i in range(rng.integers(2, 20))]
    n_docs = int(rng.integers(1, max_docs + 1))
    docs = []
    for _ in range(n_docs):
        k = int(rng.integers(0, 12))
        docs.append([words[int(i)] for i in rng.integers(0, len(words), size=k)])
    if not any(docs):
        docs[0] = [words[0]]
    return docs


def test_tfidf_matches_oracle_on_random_corpora(rng):
    for trial in range(10):
        docs = random_corpus(rng)
        mf = int(rng.integers(1, 25))
        model = fit_tfidf(docs, max_features=mf)
        vocab, expected = tfidf_oracle(docs, max_features=mf)
        assert model.vocabulary == vocab
        got = transform_tfidf_many(model, docs)
        np.testing.assert_allclose(got, expected, atol=1e-9)


def test_tfidf_vocabulary_rule():
    docs = [["b", "b", "a", "a"], ["c"]]
    model = fit_tfidf(docs, max_features=2)
    # a and b tie on count 2, lexicographic order breaks the tie
    assert model.vocabulary == ["a", "b"]


def test_tfidf_oov_ignored_and_empty_doc_zero():
    model = fit_tfidf([["a", "b"], ["a"]])
    assert np.all(transform_tfidf(model, ["zzz"]) == 0.0)
    assert np.all(transform_tfidf(model, []) == 0.0)


def test_tfidf_errors():
    with pytest.raises(DataError):
        fit_tfidf([])
    with pytest.raises(DataError):
        fit_tfidf([[], []])


@given(st.lists(st.lists(st.sampled_from("abcdef"), max_size=8), min_size=1, max_size=12))
@settings(max_examples=100, deadline=None)
def test_tfidf_row_norms(docs):
    if not any(docs):
        docs = docs + [["a"]]
    model = fit_tfidf(docs)
    X = transform_tfidf_many(model, docs)
    norms = np.linalg.norm(X, axis=1)
    for v in norms:
        assert v == pytest.approx(1.0, abs=1e-9) or v == 0.0


def test_tfidf_save_load_roundtrip(tmp_path):
    model = fit_tfidf([["a", "b", "b"], ["c", "a"]])
    save_tfidf(model, tmp_path / "tf.json")
    back = load_tfidf(tmp_path / "tf.json")
    assert back.vocabulary == model.vocabulary
    np.testing.assert_array_equal(back.idf, model.idf)
    assert back.doc_count == model.doc_count
    doc = ["a", "c", "zz"]
    np.testing.assert_array_equal(transform_tfidf(back, doc), transform_tfidf(model, doc))


# ---------------------------------------------------------------------------
# hashing and n-grams


def test_fnv1a_reference_vectors():
    assert fnv1a_32(b"") == 0x811C9DC5
    assert fnv1a_32(b"a") == 0xE40C292C
    assert fnv1a_32(b"foobar") == 0xBF9CF968


def test_char_ngrams():
    assert char_ngrams("ab") == ["<ab", "ab>", "<ab>"]
    assert char_ngrams("a") == ["<a>"]
    grams = char_ngrams("pasta")
    assert "<pa" in grams and "ta>" in grams and "<pasta" in grams
    assert all(3 <= len(g) <= 6 for g in grams)


@given(st.text(alphabet="abcdefgh", min_size=1, max_size=12))
@settings(max_examples=100, deadline=None)
def test_char_ngram_counts(word):
    s = "<" + word + ">"
    grams = char_ngrams(word, 3, 6)
    expect = sum(max(0, len(s) - n + 1) for n in range(3, 7) if n <= len(s))
    assert len(grams) == expect
    assert all(g in s for g in grams)


# ---------------------------------------------------------------------------
# RNG kernel and mirror


def test_kernel_rng_matches_python_mirror():
    x = mix_seed(5)
    mirror = XorShift64Star(mix_seed(5))
    for _ in range(200):
        x = int(_xs_next(np.uint64(x)))
        u64 = (x * int(_XS_MULT)) & _MASK64
        assert u64 == mirror.next_u64()
        assert x == mirror.x


def test_uniform_range_and_float_construction():
    rng = XorShift64Star(mix_seed(9))
    probe = XorShift64Star(mix_seed(9))
    for _ in range(500):
        u = rng.uniform()
        assert 0.0 <= u < 1.0
        assert u == (probe.next_u64() >> 11) * 2.0 ** -53


def test_mix_seed_splitmix_vector():
    # first splitmix64 output for seed 0
    assert mix_seed(0) == 0xE220A8397B1DCDAF
    assert all(mix_seed(s) != 0 for s in range(64))


# ---------------------------------------------------------------------------
# skip-gram


def toy_params(**kw):
    base = dict(dim=16, min_n=3, max_n=4, window=3, epochs=2, lr=0.05,
                negatives=3, min_count=1, bucket_count=256)
    base.update(kw)
    return EmbeddingParams(**base)


def toy_corpus():
    rng = np.random.default_rng(0)
    groups = [["red", "crimson", "scarlet"], ["blue", "azure", "navy"]]
    docs = []
    for _ in range(120):
        g = groups[int(rng.integers(0, 2))]
        docs.append([g[int(i)] for i in rng.integers(0, 3, size=6)])
    return docs


def test_train_embeddings_deterministic():
    docs = toy_corpus()
    m1 = train_embeddings(docs, toy_params(), seed=4)
    m2 = train_embeddings(docs, toy_params(), seed=4)
    np.testing.assert_array_equal(m1.vectors, m2.vectors)
    assert m1.vocab == m2.vocab
    m3 = train_embeddings(docs, toy_params(), seed=5)
    assert not np.array_equal(m1.vectors, m3.vectors)


def test_train_embeddings_probe_loss_improves():
    model = train_embeddings(toy_corpus(), toy_params(epochs=4), seed=4,
                             loss_probe_every=200)
    losses = model.probe_losses
    assert losses is not None and len(losses) >= 2
    assert losses[-1] < losses[0]


def test_min_count_filters_vocabulary():
    docs = [["common", "common", "rare"], ["common"]]
    model = train_embeddings(docs, toy_params(min_count=2, epochs=1), seed=0)
    assert "common" in model.vocab
    assert "rare" not in model.vocab


def test_embed_review_normalized_and_empty():
    model = train_embeddings(toy_corpus(), toy_params(epochs=1), seed=1)
    v = embed_review(model, ["red", "blue"])
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)
    assert np.all(embed_review(model, []) == 0.0)
    # OOV tokens still embed through their n-gram buckets
    ov = embed_review(model, ["reddish"])
    assert np.linalg.norm(ov) > 0.0


def test_embeddings_save_load_roundtrip(tmp_path):
    model = train_embeddings(toy_corpus(), toy_params(epochs=1), seed=2)
    save_embeddings(model, tmp_path / "emb.bin")
    back = load_embeddings(tmp_path / "emb.bin")
    assert back.vocab == model.vocab
    assert (back.dim, back.min_n, back.max_n, back.bucket_count) == \
        (model.dim, model.min_n, model.max_n, model.bucket_count)
    np.testing.assert_array_equal(back.vectors, model.vectors)
    doc = ["red", "navy", "unseen"]
    np.testing.assert_array_equal(embed_review(back, doc), embed_review(model, doc))


def test_save_embeddings_byte_identical(tmp_path):
    model = train_embeddings(toy_corpus(), toy_params(epochs=1), seed=2)
    save_embeddings(model, tmp_path / "a.bin")
    save_embeddings(model, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_nearest_neighbors_structural():
    # hand-built model: n-gram buckets zeroed so word rows determine cosines
    vocab = ["apple", "banana", "cherry"]
    params = dict(dim=4, min_n=3, max_n=4, bucket_count=64)
    vectors = np.zeros((3 + 64, 4), dtype=np.float32)
    vectors[0] = [1, 0, 0, 0]
    vectors[1] = [0.9, 0.1, 0, 0]
    vectors[2] = [0, 0, 1, 0]
    model = EmbeddingModel(dim=4, min_n=3, max_n=4, bucket_count=64, seed=0,
                           vocab=vocab, vectors=vectors)
    out = nearest_neighbors(model, "apple", 2)
    assert [w for w, _ in out] == ["banana", "cherry"]
    assert out[0][1] > out[1][1]
    assert all(w != "apple" for w, _ in out)
    with pytest.raises(DataError):
        nearest_neighbors(model, "apple", 0)


def test_empty_training_corpus_rejected():
    with pytest.raises(DataError):
        train_embeddings([], toy_params(), seed=0)
    with pytest.raises(DataError):
        train_embeddings([["solo"]], toy_params(min_count=5), seed=0)


def test_kernel_update_bitwise_matches_reference():
    """Drive _sgns_chunk over a two-token document and replay the identical
    updates through the numpy reference; float32 state must match bitwise."""
    from absa.vectorize import _sgns_chunk, _sgns_step_reference

    rng = np.random.default_rng(8)
    dim, nvocab, nrows_total = 6, 4, 16
    sub_lists = [[0, 5, 7], [1, 9], [2, 11, 12], [3]]
    sub_off = np.zeros(nvocab + 1, dtype=np.int64)
    for i, ids in enumerate(sub_lists):
        sub_off[i + 1] = sub_off[i] + len(ids)
    sub_flat = np.array([r for ids in sub_lists for r in ids], dtype=np.int64)
    w = rng.uniform(0.5, 2.0, size=nvocab)
    neg_cum = np.cumsum(w / w.sum())
    neg_cum[-1] = 1.0

    tokens = np.array([0, 2], dtype=np.int64)
    doc_off = np.array([0, 2], dtype=np.int64)
    inp0 = rng.normal(0, 0.1, size=(nrows_total, dim)).astype(np.float32)
    ctx0 = rng.normal(0, 0.1, size=(nvocab, dim)).astype(np.float32)
    lr0, window, negatives = 0.1, 2, 3

    inp_k, ctx_k = inp0.copy(), ctx0.copy()
    state = np.array([mix_seed(3)], dtype=np.uint64)
    processed = np.array([0], dtype=np.int64)
    _sgns_chunk(tokens, doc_off, 0, 1, inp_k, ctx_k, sub_flat, sub_off,
                neg_cum, state, processed, 2.0, lr0, window, negatives)

    inp_r, ctx_r = inp0.copy(), ctx0.copy()
    mirror = XorShift64Star(mix_seed(3))
    proc = 0
    n = len(tokens)
    for pos in range(n):
        lr = max(0.0, lr0 * (1.0 - proc / 2.0))
        proc += 1
        b = 1 + mirror.randint(window)
        lo, hi = max(0, pos - b), min(n - 1, pos + b)
        rows = sub_lists[tokens[pos]]
        for cpos in range(lo, hi + 1):
            if cpos == pos:
                continue
            _sgns_step_reference(inp_r, ctx_r, np.array(rows), int(tokens[cpos]),
                                 lr, negatives, neg_cum, mirror)

    assert mirror.x == int(state[0])
    np.testing.assert_array_equal(inp_k, inp_r)
    np.testing.assert_array_equal(ctx_k, ctx_r)


# ---------------------------------------------------------------------------
# gradient check


def test_sgns_gradient_matches_finite_differences(rng):
    for _ in range(5):
        dim = 6
        n_rows = 40
        inp = rng.normal(0, 0.5, size=(n_rows, dim))
        ctx = rng.normal(0, 0.5, size=(12, dim))
        rows = rng.choice(n_rows, size=3, replace=False)
        cword = int(rng.integers(0, 12))
        negs = [int(v) for v in rng.integers(0, 12, size=4)]
        grad_rows, gctx = sgns_pair_grad(inp, ctx, rows, cword, negs)
        eps = 1e-6
        for k, r in enumerate(rows):
            for j in range(dim):
                up, dn = inp.copy(), inp.copy()
                up[r, j] += eps
                dn[r, j] -= eps
                fd = (sgns_pair_loss(up, ctx, rows, cword, negs)
                      - sgns_pair_loss(dn, ctx, rows, cword, negs)) / (2 * eps)
                assert fd == pytest.approx(grad_rows[k, j], rel=1e-4, abs=1e-7)
        for c, g in gctx.items():
            for j in range(dim):
                up, dn = ctx.copy(), ctx.copy()
                up[c, j] += eps
                dn[c, j] -= eps
                fd = (sgns_pair_loss(inp, up, rows, cword, negs)
                      - sgns_pair_loss(inp, dn, rows, cword, negs)) / (2 * eps)
                assert fd == pytest.approx(g[j], rel=1e-4, abs=1e-7)

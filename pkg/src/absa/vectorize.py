"""Feature spaces: smoothed TF-IDF and subword skip-gram embeddings.

TF-IDF keeps the 400 highest-count tokens (ties lexicographic) with
idf(t) = ln((1+N)/(1+df_t)) + 1 and L2-normalized rows.

Embeddings are skip-gram with negative sampling where a target word is the
set of its character n-grams (sizes min_n..max_n over "<word>") plus the
word token itself; the input vector is the mean of those rows and gradient
updates are split equally across them. N-grams hash into a fixed bucket
table via FNV-1a 32-bit. The tight training loop is numba-compiled with an
inline xorshift64* generator so runs are bit-identical for a fixed seed;
`_sgns_step_reference` mirrors one update in plain numpy so the kernel's
arithmetic can be cross-checked.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .errors import DataError

# ---------------------------------------------------------------------------
# TF-IDF


@dataclass
class TfidfModel:
    vocabulary: list[str]          # column order
    idf: np.ndarray                # float64, len == len(vocabulary)
    doc_count: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.vocabulary)}


def fit_tfidf(corpus: Sequence[list[str]], max_features: int = 400) -> TfidfModel:
    """Fit vocabulary and idf weights on tokenized documents."""
    if len(corpus) == 0:
        raise DataError("empty corpus")
    counts: dict[str, int] = {}
    df: dict[str, int] = {}
    for doc in corpus:
        for tok in doc:
            counts[tok] = counts.get(tok, 0) + 1
        for tok in set(doc):
            df[tok] = df.get(tok, 0) + 1
    if not counts:
        raise DataError("empty vocabulary")
    vocab = sorted(counts, key=lambda t: (-counts[t], t))[:max_features]
    n = len(corpus)
    idf = np.array([np.log((1.0 + n) / (1.0 + df[t])) + 1.0 for t in vocab])
    return TfidfModel(vocabulary=vocab, idf=idf, doc_count=n)


def transform_tfidf(model: TfidfModel, doc: list[str]) -> np.ndarray:
    """Counts times idf, L2-normalized; OOV tokens are ignored."""
    vec = np.zeros(len(model.vocabulary))
    for tok in doc:
        j = model.index.get(tok)
        if j is not None:
            vec[j] += 1.0
    vec *= model.idf
    norm = np.linalg.norm(vec)
    if norm > 0.0:
        vec /= norm
    return vec


def transform_tfidf_many(model: TfidfModel, docs: Iterable[list[str]]) -> np.ndarray:
    rows = [transform_tfidf(model, d) for d in docs]
    if not rows:
        return np.zeros((0, len(model.vocabulary)))
    return np.stack(rows)


def save_tfidf(model: TfidfModel, path: str | Path, config_digest: str | None = None) -> None:
    obj = {
        "vocabulary": model.vocabulary,
        "idf": [float(x) for x in model.idf],
        "doc_count": model.doc_count,
    }
    if config_digest is not None:
        obj["config_digest"] = config_digest
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_tfidf(path: str | Path) -> TfidfModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return TfidfModel(
        vocabulary=list(obj["vocabulary"]),
        idf=np.asarray(obj["idf"], dtype=np.float64),
        doc_count=int(obj["doc_count"]),
    )


# ---------------------------------------------------------------------------
# subword machinery

_FNV_OFFSET = 0x811C9DC5
_FNV_PRIME = 0x01000193
_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_32(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK32
    return h


def char_ngrams(word: str, min_n: int = 3, max_n: int = 6) -> list[str]:
    """Character n-grams of "<word>", sizes min_n..max_n, in scan order."""
    s = "<" + word + ">"
    out = []
    for n in range(min_n, max_n + 1):
        if n > len(s):
            break
        for i in range(len(s) - n + 1):
            out.append(s[i : i + n])
    return out


@dataclass
class EmbeddingParams:
    dim: int = 100
    min_n: int = 3
    max_n: int = 6
    window: int = 5
    epochs: int = 5
    lr: float = 0.05
    negatives: int = 5
    min_count: int = 5
    bucket_count: int = 2 ** 21


@dataclass
class EmbeddingModel:
    dim: int
    min_n: int
    max_n: int
    bucket_count: int
    seed: int
    vocab: list[str]
    vectors: np.ndarray  # float32, (len(vocab) + bucket_count) x dim
    index: dict[str, int] = field(init=False, repr=False)
    _word_mat: np.ndarray | None = field(init=False, repr=False, default=None)
    probe_losses: list[float] | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.vocab)}

    def subword_ids(self, token: str) -> list[int]:
        """Row indices representing a token: word row (if in vocabulary)
        followed by hashed n-gram bucket rows."""
        nv = len(self.vocab)
        ids = []
        wid = self.index.get(token)
        if wid is not None:
            ids.append(wid)
        for g in char_ngrams(token, self.min_n, self.max_n):
            ids.append(nv + fnv1a_32(g.encode("utf-8")) % self.bucket_count)
        return ids

    def word_vector(self, token: str) -> np.ndarray:
        ids = self.subword_ids(token)
        if not ids:
            return np.zeros(self.dim)
        return self.vectors[ids].astype(np.float64).mean(axis=0)

    def word_matrix(self) -> np.ndarray:
        """Word vectors for every in-vocabulary token, row per vocab index."""
        if self._word_mat is None:
            mat = np.zeros((len(self.vocab), self.dim))
            for i, tok in enumerate(self.vocab):
                mat[i] = self.word_vector(tok)
            self._word_mat = mat
        return self._word_mat


def embed_review(model: EmbeddingModel, doc: list[str]) -> np.ndarray:
    """L2-normalized elementwise mean of the document's word vectors."""
    if not doc:
        return np.zeros(model.dim)
    acc = np.zeros(model.dim)
    for tok in doc:
        acc += model.word_vector(tok)
    acc /= len(doc)
    norm = np.linalg.norm(acc)
    if norm > 0.0:
        acc /= norm
    return acc


def embed_many(model: EmbeddingModel, docs: Iterable[list[str]]) -> np.ndarray:
    rows = [embed_review(model, d) for d in docs]
    if not rows:
        return np.zeros((0, model.dim))
    return np.stack(rows)


def nearest_neighbors(model: EmbeddingModel, token: str, k: int) -> list[tuple[str, float]]:
    """Top-k in-vocabulary tokens by cosine similarity to the query's word
    vector, excluding the query itself; ties broken lexicographically."""
    if k < 1:
        raise DataError("k must be >= 1")
    q = model.word_vector(token)
    qn = np.linalg.norm(q)
    mat = model.word_matrix()
    norms = np.linalg.norm(mat, axis=1)
    sims = np.zeros(len(model.vocab))
    if qn > 0.0:
        ok = norms > 0.0
        sims[ok] = (mat[ok] @ q) / (norms[ok] * qn)
    order = sorted(
        (i for i in range(len(model.vocab)) if model.vocab[i] != token),
        key=lambda i: (-sims[i], model.vocab[i]),
    )
    return [(model.vocab[i], float(sims[i])) for i in order[:k]]


# ---------------------------------------------------------------------------
# deterministic RNG (numba kernel + python mirror)

_XS_MULT = np.uint64(2685821657736338717)


@njit(cache=True)
def _xs_next(x):
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    return x


class XorShift64Star:
    """Python mirror of the kernel RNG, for cross-checking kernel math."""

    def __init__(self, state: int):
        self.x = state & _MASK64

    def next_u64(self) -> int:
        x = self.x
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self.x = x
        return (x * 2685821657736338717) & _MASK64

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def randint(self, n: int) -> int:
        return self.next_u64() % n


def mix_seed(seed: int) -> int:
    """splitmix64 finalizer; maps any 64-bit seed to a nonzero RNG state."""
    z = (seed + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z or 0x9E3779B97F4A7C15


# ---------------------------------------------------------------------------
# skip-gram training


@njit(cache=True)
def _sgns_chunk(tokens, doc_off, d0, d1, inp, ctx, sub_flat, sub_off, neg_cum,
                state, processed, total_planned, lr0, window, negatives):
    dim = inp.shape[1]
    nvocab = ctx.shape[0]
    h = np.empty(dim, np.float64)
    gacc = np.empty(dim, np.float64)
    x = state[0]
    proc = processed[0]
    for d in range(d0, d1):
        start = doc_off[d]
        end = doc_off[d + 1]
        n = end - start
        for pos in range(n):
            lr = lr0 * (1.0 - proc / total_planned)
            if lr < 0.0:
                lr = 0.0
            proc += 1
            x = _xs_next(x)
            b = 1 + int((x * _XS_MULT) % np.uint64(window))
            target = tokens[start + pos]
            r0 = sub_off[target]
            r1 = sub_off[target + 1]
            nrows = r1 - r0
            lo = pos - b
            if lo < 0:
                lo = 0
            hi = pos + b
            if hi > n - 1:
                hi = n - 1
            for cpos in range(lo, hi + 1):
                if cpos == pos:
                    continue
                cword = tokens[start + cpos]
                for j in range(dim):
                    h[j] = 0.0
                for r in range(r0, r1):
                    row = sub_flat[r]
                    for j in range(dim):
                        h[j] += inp[row, j]
                for j in range(dim):
                    h[j] /= nrows
                    gacc[j] = 0.0
                for s in range(negatives + 1):
                    if s == 0:
                        c = cword
                        label = 1.0
                    else:
                        label = 0.0
                        if nvocab <= 1:
                            continue
                        while True:
                            x = _xs_next(x)
                            r = ((x * _XS_MULT) >> np.uint64(11)) * 2.0 ** -53
                            lo_i = 0
                            hi_i = nvocab
                            while lo_i < hi_i:
                                mid = (lo_i + hi_i) // 2
                                if neg_cum[mid] <= r:
                                    lo_i = mid + 1
                                else:
                                    hi_i = mid
                            c = lo_i
                            if c >= nvocab:
                                c = nvocab - 1
                            if c != cword:
                                break
                    score = 0.0
                    for j in range(dim):
                        score += ctx[c, j] * h[j]
                    p = 1.0 / (1.0 + np.exp(-score))
                    g = lr * (label - p)
                    for j in range(dim):
                        gacc[j] += g * ctx[c, j]
                        ctx[c, j] += g * h[j]
                scale = 1.0 / nrows
                for r in range(r0, r1):
                    row = sub_flat[r]
                    for j in range(dim):
                        inp[row, j] += gacc[j] * scale
    state[0] = x
    processed[0] = proc


def _sgns_step_reference(inp, ctx, rows, cword, lr, negatives, neg_cum, rng: XorShift64Star):
    """One (target, context) update in plain numpy, mirroring the kernel.

    Mutates float32 inp/ctx in place and consumes the mirror RNG exactly
    as the kernel would for the negative draws.
    """
    nvocab = ctx.shape[0]
    h = inp[rows].astype(np.float64).sum(axis=0) / len(rows)
    gacc = np.zeros(inp.shape[1])
    for s in range(negatives + 1):
        if s == 0:
            c = cword
            label = 1.0
        else:
            label = 0.0
            if nvocab <= 1:
                continue
            while True:
                r = rng.uniform()
                c = int(np.searchsorted(neg_cum, r, side="right"))
                if c >= nvocab:
                    c = nvocab - 1
                if c != cword:
                    break
        score = float(np.sum(ctx[c].astype(np.float64) * h))
        p = 1.0 / (1.0 + np.exp(-score))
        g = lr * (label - p)
        gacc += g * ctx[c].astype(np.float64)
        ctx[c] = (ctx[c].astype(np.float64) + g * h).astype(np.float32)
    # sequential per-row adds: subword rows may repeat when n-grams collide
    # into the same bucket, and each occurrence gets its share
    for r in rows:
        inp[r] = (inp[r].astype(np.float64) + gacc / len(rows)).astype(np.float32)


def sgns_pair_loss(inp, ctx, rows, cword, negs) -> float:
    """Negative sampling loss for one (target, context, negatives) triple."""
    h = inp[rows].astype(np.float64).sum(axis=0) / len(rows)
    score = float(np.sum(ctx[cword].astype(np.float64) * h))
    loss = float(np.log1p(np.exp(-score)))
    for c in negs:
        s = float(np.sum(ctx[c].astype(np.float64) * h))
        loss += float(np.log1p(np.exp(s)))
    return loss


def sgns_pair_grad(inp, ctx, rows, cword, negs):
    """Analytic gradient of sgns_pair_loss.

    Returns (grad_inp_rows, grad_ctx) where grad_inp_rows has one row per
    entry of `rows` (each equal to grad_h / n_rows) and grad_ctx maps
    context ids to gradient vectors.
    """
    h = inp[rows].astype(np.float64).sum(axis=0) / len(rows)
    gh = np.zeros_like(h)
    gctx: dict[int, np.ndarray] = {}
    for c, label in [(cword, 1.0)] + [(c, 0.0) for c in negs]:
        score = float(np.sum(ctx[c].astype(np.float64) * h))
        p = 1.0 / (1.0 + np.exp(-score))
        coef = p - label  # d loss / d score
        gh += coef * ctx[c].astype(np.float64)
        gctx[c] = gctx.get(c, 0.0) + coef * h
    grad_rows = np.tile(gh / len(rows), (len(rows), 1))
    return grad_rows, gctx


def _build_vocab(corpus, min_count: int):
    counts: dict[str, int] = {}
    total_docs = 0
    for doc in corpus:
        total_docs += 1
        for tok in doc:
            counts[tok] = counts.get(tok, 0) + 1
    if total_docs == 0:
        raise DataError("empty corpus")
    vocab = sorted((t for t, c in counts.items() if c >= min_count),
                   key=lambda t: (-counts[t], t))
    if not vocab:
        raise DataError("empty effective vocabulary")
    return vocab, counts


def train_embeddings(corpus, params: EmbeddingParams | None = None, seed: int = 0,
                     loss_probe_every: int = 0) -> EmbeddingModel:
    """Train subword skip-gram embeddings.

    `corpus` must be re-iterable (a list, or a file-backed view); training
    makes one vocabulary pass plus one pass per epoch. Bit-identical for a
    fixed seed. When loss_probe_every > 0, negative-sampling loss on a
    frozen set of probe pairs is recorded roughly every that many processed
    tokens and attached to the returned model as `probe_losses`.
    """
    if params is None:
        params = EmbeddingParams()
    if iter(corpus) is corpus:
        raise DataError("corpus must be re-iterable (got a one-shot iterator)")
    vocab, counts = _build_vocab(corpus, params.min_count)
    nv = len(vocab)
    vid = {t: i for i, t in enumerate(vocab)}

    # subword row ids per vocabulary word: word row first, then buckets
    sub_lists = []
    for i, tok in enumerate(vocab):
        ids = [i]
        for g in char_ngrams(tok, params.min_n, params.max_n):
            ids.append(nv + fnv1a_32(g.encode("utf-8")) % params.bucket_count)
        sub_lists.append(ids)
    sub_off = np.zeros(nv + 1, dtype=np.int64)
    for i, ids in enumerate(sub_lists):
        sub_off[i + 1] = sub_off[i] + len(ids)
    sub_flat = np.fromiter((r for ids in sub_lists for r in ids), dtype=np.int64,
                           count=int(sub_off[-1]))

    # unigram^(3/4) negative-sampling distribution
    freq = np.array([counts[t] for t in vocab], dtype=np.float64) ** 0.75
    neg_cum = np.cumsum(freq / freq.sum())
    neg_cum[-1] = 1.0

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    inp = rng.uniform(-1.0 / params.dim, 1.0 / params.dim,
                      size=(nv + params.bucket_count, params.dim)).astype(np.float32)
    ctx = np.zeros((nv, params.dim), dtype=np.float32)

    # filter docs to vocabulary ids once
    docs = []
    total_tokens = 0
    for doc in corpus:
        ids = [vid[t] for t in doc if t in vid]
        if ids:
            docs.append(np.asarray(ids, dtype=np.int64))
            total_tokens += len(ids)
    tokens = np.concatenate(docs) if docs else np.zeros(0, dtype=np.int64)
    doc_off = np.zeros(len(docs) + 1, dtype=np.int64)
    for i, d in enumerate(docs):
        doc_off[i + 1] = doc_off[i] + len(d)

    total_planned = float(max(1, params.epochs * total_tokens))
    state = np.array([mix_seed(seed)], dtype=np.uint64)
    processed = np.array([0], dtype=np.int64)

    probe = None
    losses: list[float] | None = None
    if loss_probe_every > 0 and total_tokens >= 2:
        probe = _make_probe_pairs(tokens, doc_off, params, seed)
        losses = []

    ndocs = len(docs)
    if probe is None:
        chunks = [(0, ndocs)]
    else:
        # chunk so the probe fires roughly every loss_probe_every tokens
        step = max(1, int(round(ndocs * loss_probe_every / max(1, total_tokens))))
        chunks = [(i, min(i + step, ndocs)) for i in range(0, ndocs, step)]

    for _ in range(params.epochs):
        for d0, d1 in chunks:
            _sgns_chunk(tokens, doc_off, d0, d1, inp, ctx, sub_flat, sub_off,
                        neg_cum, state, processed, total_planned,
                        params.lr, params.window, params.negatives)
            if probe is not None:
                losses.append(_probe_loss(inp, ctx, sub_flat, sub_off, probe))

    model = EmbeddingModel(
        dim=params.dim, min_n=params.min_n, max_n=params.max_n,
        bucket_count=params.bucket_count, seed=seed, vocab=vocab, vectors=inp,
    )
    model.probe_losses = losses
    return model


def _make_probe_pairs(tokens, doc_off, params: EmbeddingParams, seed: int, n_pairs: int = 200):
    """Frozen (target, context, negatives) triples drawn from the corpus."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0xAB5A))))
    nvocab = 0
    for t in tokens:
        if t + 1 > nvocab:
            nvocab = int(t) + 1
    triples = []
    ndocs = len(doc_off) - 1
    for _ in range(n_pairs):
        d = int(rng.integers(ndocs))
        start, end = int(doc_off[d]), int(doc_off[d + 1])
        if end - start < 2:
            continue
        pos = int(rng.integers(start, end))
        off = int(rng.integers(1, min(params.window, end - start - 1) + 1))
        cpos = pos + off if pos + off < end else pos - off
        if cpos < start or cpos == pos:
            cpos = start if pos != start else pos + 1
        negs = rng.integers(0, nvocab, size=params.negatives)
        triples.append((int(tokens[pos]), int(tokens[cpos]), [int(x) for x in negs]))
    return triples


def _probe_loss(inp, ctx, sub_flat, sub_off, triples) -> float:
    total = 0.0
    for target, cword, negs in triples:
        rows = sub_flat[sub_off[target]: sub_off[target + 1]]
        total += sgns_pair_loss(inp, ctx, rows, cword, negs)
    return total / max(1, len(triples))


# ---------------------------------------------------------------------------
# embedding model file format
#
# binary, little-endian: magic "ABSAEMB1"; u32 dim, vocab_size,
# bucket_count, min_n, max_n; u64 seed; per vocab token a u32 byte length
# and that many UTF-8 bytes; then (vocab_size + bucket_count) x dim float32
# row-major.

_MAGIC = b"ABSAEMB1"


def save_embeddings(model: EmbeddingModel, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<5I", model.dim, len(model.vocab),
                             model.bucket_count, model.min_n, model.max_n))
        fh.write(struct.pack("<Q", model.seed & _MASK64))
        for tok in model.vocab:
            raw = tok.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        mat = np.ascontiguousarray(model.vectors, dtype="<f4")
        fh.write(mat.tobytes())


def load_embeddings(path: str | Path) -> EmbeddingModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise DataError(f"{path}: not an embedding model file")
        dim, vocab_size, bucket_count, min_n, max_n = struct.unpack("<5I", fh.read(20))
        (seed,) = struct.unpack("<Q", fh.read(8))
        vocab = []
        for _ in range(vocab_size):
            (ln,) = struct.unpack("<I", fh.read(4))
            vocab.append(fh.read(ln).decode("utf-8"))
        want = (vocab_size + bucket_count) * dim * 4
        buf = fh.read(want)
        if len(buf) != want:
            raise DataError(f"{path}: truncated vector block")
        vectors = np.frombuffer(buf, dtype="<f4").reshape(vocab_size + bucket_count, dim).copy()
    return EmbeddingModel(dim=dim, min_n=min_n, max_n=max_n, bucket_count=bucket_count,
                          seed=seed, vocab=vocab, vectors=vectors)

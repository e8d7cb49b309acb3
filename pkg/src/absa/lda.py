"""Collapsed Gibbs LDA over sentiment-grouped review sets.

Reviews are split into positive (stars above 3), negative (below 3) and
neutral (equal to 3) groups, keyed by business. Each (business, group)
pair gets its own sampler over its tokenized reviews; samplers are
independent, so they can run on a thread pool, and each one is seeded from
the run seed plus a hash of its key so results do not depend on worker
count or completion order.

The sampler itself is the textbook collapsed chain: topic assignments are
resampled token by token with probability proportional to
(n_dk + alpha) * (n_kw + beta) / (n_k + V*beta), current token excluded.
Counts are integers, probabilities float64, and the RNG is the same
xorshift64* used by the embedding kernel.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit
from scipy.special import gammaln

from .errors import DataError
from .ingest import CorpusRecord
from .textprep import preprocess
from .vectorize import _XS_MULT, _xs_next, mix_seed

GROUP_ORDER = ("positive", "negative", "neutral")

_MASK64 = (1 << 64) - 1


def group_by_sentiment(corpus: Iterable[CorpusRecord]) -> dict:
    """Partition reviews into positive/negative/neutral, keyed by business."""
    groups: dict[str, dict[str, list[CorpusRecord]]] = {g: {} for g in GROUP_ORDER}
    for rec in corpus:
        if rec.stars > 3:
            g = "positive"
        elif rec.stars < 3:
            g = "negative"
        else:
            g = "neutral"
        groups[g].setdefault(rec.business_id, []).append(rec)
    return groups


# ---------------------------------------------------------------------------
# sampler kernels


@njit(cache=True, nogil=True)
def _gibbs_init(tokens, doc_ids, n_topics, z, n_dk, n_kw, n_k, state):
    x = state[0]
    for i in range(tokens.shape[0]):
        x = _xs_next(x)
        u = ((x * _XS_MULT) >> np.uint64(11)) * 2.0 ** -53
        k = int(u * n_topics)
        if k >= n_topics:
            k = n_topics - 1
        z[i] = k
        n_dk[doc_ids[i], k] += 1
        n_kw[k, tokens[i]] += 1
        n_k[k] += 1
    state[0] = x


@njit(cache=True, nogil=True)
def _gibbs_sweeps(tokens, doc_ids, z, n_dk, n_kw, n_k, alpha, beta, state, n_sweeps):
    n_topics = n_kw.shape[0]
    vbeta = n_kw.shape[1] * beta
    cum = np.empty(n_topics, np.float64)
    x = state[0]
    for _ in range(n_sweeps):
        for i in range(tokens.shape[0]):
            d = doc_ids[i]
            w = tokens[i]
            k_old = z[i]
            n_dk[d, k_old] -= 1
            n_kw[k_old, w] -= 1
            n_k[k_old] -= 1
            total = 0.0
            for k in range(n_topics):
                total += (n_dk[d, k] + alpha) * (n_kw[k, w] + beta) / (n_k[k] + vbeta)
                cum[k] = total
            x = _xs_next(x)
            u = ((x * _XS_MULT) >> np.uint64(11)) * 2.0 ** -53
            target = u * total
            k_new = 0
            while k_new < n_topics - 1 and cum[k_new] <= target:
                k_new += 1
            z[i] = k_new
            n_dk[d, k_new] += 1
            n_kw[k_new, w] += 1
            n_k[k_new] += 1
    state[0] = x


# ---------------------------------------------------------------------------
# model


@dataclass
class LdaModel:
    n_topics: int
    alpha: float
    beta: float
    iterations: int
    seed: int
    vocab: list[str]
    topic_word: np.ndarray          # K x V counts
    doc_topic: np.ndarray           # D x K counts
    topic_totals: np.ndarray        # K
    assignments: np.ndarray         # per-token topic ids
    doc_lengths: np.ndarray
    log_likelihood: list = field(default_factory=list)   # (sweep, loglik) pairs

    def topic_word_distributions(self) -> np.ndarray:
        v = len(self.vocab)
        return ((self.topic_word + self.beta)
                / (self.topic_totals[:, None] + v * self.beta))

    def doc_topic_distributions(self) -> np.ndarray:
        return ((self.doc_topic + self.alpha)
                / (self.doc_lengths[:, None] + self.n_topics * self.alpha))


def joint_log_likelihood(n_dk, n_kw, n_k, doc_lengths, alpha, beta) -> float:
    """log p(w, z) with theta and phi integrated out."""
    n_docs, n_topics = n_dk.shape
    v = n_kw.shape[1]
    ll = n_docs * (gammaln(n_topics * alpha) - n_topics * gammaln(alpha))
    ll -= gammaln(doc_lengths + n_topics * alpha).sum()
    ll += gammaln(n_dk + alpha).sum()
    ll += n_topics * (gammaln(v * beta) - v * gammaln(beta))
    ll -= gammaln(n_k + v * beta).sum()
    ll += gammaln(n_kw + beta).sum()
    return float(ll)


def fit_lda(docs: Sequence[Sequence[str]], n_topics: int = 5, alpha: float = 0.1,
            beta: float = 0.01, iterations: int = 1000, seed: int = 0,
            likelihood_every: int = 0) -> LdaModel:
    """Collapsed Gibbs sampling over tokenized documents.

    likelihood_every > 0 records the joint log-likelihood every that many
    sweeps. The chain is advanced in sweep-sized chunks whose boundaries
    carry the RNG state, so tracking does not change the result.
    """
    if n_topics < 1:
        raise DataError(f"n_topics must be >= 1, got {n_topics}")
    docs = [list(d) for d in docs]
    if not any(docs):
        raise DataError("empty vocabulary: no tokens in any document")
    vocab = sorted({t for d in docs for t in d})
    index = {t: i for i, t in enumerate(vocab)}
    tokens = np.array([index[t] for d in docs for t in d], dtype=np.int32)
    doc_ids = np.array([di for di, d in enumerate(docs) for _ in d], dtype=np.int32)
    n_docs = len(docs)
    z = np.zeros(len(tokens), dtype=np.int32)
    n_dk = np.zeros((n_docs, n_topics), dtype=np.int64)
    n_kw = np.zeros((n_topics, len(vocab)), dtype=np.int64)
    n_k = np.zeros(n_topics, dtype=np.int64)
    state = np.array([mix_seed(seed)], dtype=np.uint64)
    _gibbs_init(tokens, doc_ids, n_topics, z, n_dk, n_kw, n_k, state)
    doc_lengths = np.array([len(d) for d in docs], dtype=np.int64)
    track: list = []
    if likelihood_every > 0:
        done = 0
        while done < iterations:
            step = min(likelihood_every, iterations - done)
            _gibbs_sweeps(tokens, doc_ids, z, n_dk, n_kw, n_k, alpha, beta, state, step)
            done += step
            track.append((done, joint_log_likelihood(n_dk, n_kw, n_k, doc_lengths,
                                                     alpha, beta)))
    elif iterations > 0:
        _gibbs_sweeps(tokens, doc_ids, z, n_dk, n_kw, n_k, alpha, beta, state,
                      iterations)
    return LdaModel(n_topics=n_topics, alpha=alpha, beta=beta, iterations=iterations,
                    seed=seed, vocab=vocab, topic_word=n_kw, doc_topic=n_dk,
                    topic_totals=n_k, assignments=z, doc_lengths=doc_lengths,
                    log_likelihood=track)


def top_words(model: LdaModel, k: int = 10) -> list:
    """Per topic, the k words of highest smoothed probability.

    Ties break lexicographically; k larger than the vocabulary returns the
    full ranking.
    """
    dists = model.topic_word_distributions()
    k = min(k, len(model.vocab))
    out = []
    for t in range(model.n_topics):
        ranked = sorted(range(len(model.vocab)),
                        key=lambda w: (-dists[t, w], model.vocab[w]))
        out.append([(model.vocab[w], float(dists[t, w])) for w in ranked[:k]])
    return out


# ---------------------------------------------------------------------------
# orchestration over a corpus


def _pair_seed(seed: int, group: str, business_id: str) -> int:
    digest = hashlib.sha256(f"{group}:{business_id}".encode("utf-8")).digest()
    return (seed ^ int.from_bytes(digest[:8], "big")) & _MASK64


def lda_topic_table(corpus: Iterable[CorpusRecord], n_topics: int = 5,
                    alpha: float = 0.1, beta: float = 0.01, iterations: int = 1000,
                    top_k: int = 10, seed: int = 0, per_restaurant: bool = True,
                    workers: int = 1, stopwords=None, lexicon=None) -> list[dict]:
    """Fit LDA per (business, sentiment-group) pair, or pooled per group.

    Returns rows {group, business_id, topics} in fixed group then business
    order. Pairs whose reviews tokenize to nothing are skipped. Pooled mode
    fits one model per sentiment group and sets business_id to None.
    """
    groups = group_by_sentiment(corpus)
    jobs = []   # (group, business_id or None, docs)
    if per_restaurant:
        for g in GROUP_ORDER:
            for biz in sorted(groups[g]):
                recs = sorted(groups[g][biz], key=lambda r: r.review_id)
                docs = [preprocess(r.text, stopwords=stopwords, lexicon=lexicon)
                        for r in recs]
                if any(docs):
                    jobs.append((g, biz, docs))
    else:
        for g in GROUP_ORDER:
            recs = [r for biz in sorted(groups[g])
                    for r in sorted(groups[g][biz], key=lambda x: x.review_id)]
            docs = [preprocess(r.text, stopwords=stopwords, lexicon=lexicon)
                    for r in recs]
            if any(docs):
                jobs.append((g, None, docs))

    def run(job):
        g, biz, docs = job
        model = fit_lda(docs, n_topics=n_topics, alpha=alpha, beta=beta,
                        iterations=iterations,
                        seed=_pair_seed(seed, g, biz if biz is not None else ""))
        return {"group": g, "business_id": biz,
                "topics": [[[w, p] for w, p in topic]
                           for topic in top_words(model, top_k)]}

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]
    return rows


def write_topic_table(rows: Sequence[dict], path: str | Path) -> None:
    """One JSON object per line, mirroring the corpus format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False,
                                separators=(",", ":")) + "\n")

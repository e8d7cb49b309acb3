"""Classifiers, rebalancing, and the one-stage / two-stage architectures.

Three feature-space-agnostic model kinds: multinomial naive Bayes (Laplace
smoothing, log-space scoring), softmax/binomial logistic regression trained
by full-batch gradient descent with Armijo backtracking, and a linear
one-vs-rest SVM on the Pegasos schedule. Argmax ties always break toward
the lower class in the fixed class order, and every trainer is
deterministic for a fixed seed.

The two architectures share one seeded 80/20 split, stratified on the joint
six-aspect label pattern, so per-aspect metrics and the paired architecture
comparison are computed over identical validation rows.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ASPECTS
from .errors import DataError
from .ingest import AspectLabelSet, CorpusRecord, LABEL_HEADER
from .textprep import preprocess
from .vectorize import EmbeddingModel, TfidfModel, embed_review, transform_tfidf_many

RELEVANT = "relevant"
IRRELEVANT = "irrelevant"


@dataclass
class ClassifierModel:
    kind: str                      # mnb | logreg | linsvm
    classes: list                  # ordered label list; argmax ties -> first
    weights: np.ndarray            # classes x features
    bias: np.ndarray               # per class
    feature_space: str = "embedding"
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0
    loss_history: list[float] | None = field(default=None, repr=False)

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.weights.shape[1]:
            raise DataError(
                f"feature width {X.shape[1]} does not match model ({self.weights.shape[1]})")
        return X @ self.weights.T + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        s = self.scores(X)
        idx = np.argmax(s, axis=1)  # first maximum wins -> class-order tie-break
        return np.asarray(self.classes, dtype=object)[idx]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "linsvm":
            raise DataError("linsvm does not define class probabilities")
        s = self.scores(X)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)


def _check_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("feature matrix must be 2-D")
    if not np.isfinite(X).all():
        raise DataError("feature matrix contains NaN or Inf")
    return X


def _class_order(y) -> list:
    return sorted(set(y))


# ---------------------------------------------------------------------------
# multinomial naive Bayes


def train_mnb(X, y, alpha: float = 1.0, feature_space: str = "tfidf",
              seed: int = 0) -> ClassifierModel:
    X = _check_matrix(X)
    if (X < 0).any():
        raise DataError("mnb requires non-negative features")
    classes = _class_order(y)
    if len(classes) < 2:
        raise DataError("need at least 2 classes")
    y = np.asarray(y)
    n, f = X.shape
    W = np.zeros((len(classes), f))
    b = np.zeros(len(classes))
    for i, c in enumerate(classes):
        rows = X[y == c]
        counts = rows.sum(axis=0)
        W[i] = np.log(counts + alpha) - np.log(counts.sum() + alpha * f)
        b[i] = np.log(len(rows) / n)
    return ClassifierModel(kind="mnb", classes=classes, weights=W, bias=b,
                           feature_space=feature_space,
                           hyperparams={"alpha": alpha}, seed=seed)


# ---------------------------------------------------------------------------
# logistic regression


def _softmax_loss_grad(W, b, X, Y, lam):
    """Mean NLL + (lam/2)||W||^2 and its gradients (bias unpenalized)."""
    n = X.shape[0]
    S = X @ W.T + b
    S = S - S.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(S).sum(axis=1))
    loss = float((logZ - (S * Y).sum(axis=1)).mean()) + 0.5 * lam * float((W * W).sum())
    P = np.exp(S - logZ[:, None])
    D = (P - Y) / n
    gW = D.T @ X + lam * W
    gb = D.sum(axis=0)
    return loss, gW, gb


def _softmax_loss(W, b, X, Y, lam):
    n = X.shape[0]
    S = X @ W.T + b
    S = S - S.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(S).sum(axis=1))
    return float((logZ - (S * Y).sum(axis=1)).mean()) + 0.5 * lam * float((W * W).sum())


def train_logreg(X, y, l2: float = 1e-4, tol: float = 1e-6, max_iter: int = 1000,
                 feature_space: str = "embedding", seed: int = 0) -> ClassifierModel:
    """Full-batch gradient descent with Armijo backtracking line search.

    Multinomial softmax; with exactly two classes the problem is fit as a
    single binomial score vector (softmax over [0, s] is the sigmoid) and
    stored expanded to two weight rows. Stops when the gradient infinity
    norm falls below tol or after max_iter accepted steps.
    """
    X = _check_matrix(X)
    classes = _class_order(y)
    if len(classes) < 2:
        raise DataError("need at least 2 classes")
    y = np.asarray(y)
    cindex = {c: i for i, c in enumerate(classes)}
    n, f = X.shape
    binomial = len(classes) == 2
    if binomial:
        # one score row; class 0 is the softmax reference with score 0
        Y = np.zeros((n, 2))
        Y[np.arange(n), [cindex[c] for c in y]] = 1.0
        W = np.zeros((1, f))
        b = np.zeros(1)
        expand = lambda W1, b1: (np.vstack([np.zeros((1, f)), W1]),
                                 np.concatenate([[0.0], b1]))
        loss_grad = lambda W1, b1: _binomial_loss_grad(W1, b1, X, Y[:, 1], l2)
        loss_only = lambda W1, b1: _binomial_loss(W1, b1, X, Y[:, 1], l2)
    else:
        Y = np.zeros((n, len(classes)))
        Y[np.arange(n), [cindex[c] for c in y]] = 1.0
        W = np.zeros((len(classes), f))
        b = np.zeros(len(classes))
        expand = lambda W1, b1: (W1, b1)
        loss_grad = lambda W1, b1: _softmax_loss_grad(W1, b1, X, Y, l2)
        loss_only = lambda W1, b1: _softmax_loss(W1, b1, X, Y, l2)

    history = []
    loss, gW, gb = loss_grad(W, b)
    history.append(loss)
    for _ in range(max_iter):
        gmax = max(np.abs(gW).max(), np.abs(gb).max())
        if gmax < tol:
            break
        gg = float((gW * gW).sum() + (gb * gb).sum())
        t = 1.0
        accepted = False
        while t > 1e-20:
            W2 = W - t * gW
            b2 = b - t * gb
            new = loss_only(W2, b2)
            if new <= loss - 1e-4 * t * gg:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        W, b = W2, b2
        loss, gW, gb = loss_grad(W, b)
        history.append(loss)
    Wf, bf = expand(W, b)
    model = ClassifierModel(kind="logreg", classes=classes, weights=Wf, bias=bf,
                            feature_space=feature_space,
                            hyperparams={"l2": l2, "tol": tol, "max_iter": max_iter},
                            seed=seed)
    model.loss_history = history
    return model


def _binomial_loss_grad(W1, b1, X, y1, lam):
    n = X.shape[0]
    s = X @ W1[0] + b1[0]
    # stable log(1+exp(s)) - y*s
    loss = float((np.logaddexp(0.0, s) - y1 * s).mean()) + 0.5 * lam * float((W1 * W1).sum())
    p = 1.0 / (1.0 + np.exp(-s))
    d = (p - y1) / n
    gW = (d @ X + lam * W1[0])[None, :]
    gb = np.array([d.sum()])
    return loss, gW, gb


def _binomial_loss(W1, b1, X, y1, lam):
    s = X @ W1[0] + b1[0]
    return float((np.logaddexp(0.0, s) - y1 * s).mean()) + 0.5 * lam * float((W1 * W1).sum())


# ---------------------------------------------------------------------------
# linear SVM (Pegasos, one-vs-rest)


def train_linsvm(X, y, l2: float = 1e-4, epochs: int = 100,
                 feature_space: str = "embedding", seed: int = 0) -> ClassifierModel:
    """Deterministic epoch-based Pegasos subgradient descent, one-vs-rest.

    Samples are visited in input order each epoch with the global step
    schedule eta_t = 1/(l2 * t); no shuffling, so runs are reproducible
    without an RNG.
    """
    X = _check_matrix(X)
    classes = _class_order(y)
    if len(classes) < 2:
        raise DataError("need at least 2 classes")
    y = np.asarray(y)
    n, f = X.shape
    W = np.zeros((len(classes), f))
    b = np.zeros(len(classes))
    for i, c in enumerate(classes):
        sign = np.where(y == c, 1.0, -1.0)
        w = np.zeros(f)
        bi = 0.0
        t = 0
        for _ in range(epochs):
            for j in range(n):
                t += 1
                eta = 1.0 / (l2 * t)
                margin = sign[j] * (X[j] @ w + bi)
                w *= 1.0 - eta * l2
                if margin < 1.0:
                    w += eta * sign[j] * X[j]
                    bi += eta * sign[j]
        W[i] = w
        b[i] = bi
    return ClassifierModel(kind="linsvm", classes=classes, weights=W, bias=b,
                           feature_space=feature_space,
                           hyperparams={"l2": l2, "epochs": epochs}, seed=seed)


_TRAINERS = {"mnb": train_mnb, "logreg": train_logreg, "linsvm": train_linsvm}


def train_classifier(kind: str, X, y, hyperparams: dict | None = None,
                     seed: int = 0, feature_space: str = "embedding") -> ClassifierModel:
    if kind not in _TRAINERS:
        raise DataError(f"unknown classifier kind {kind!r}")
    return _TRAINERS[kind](X, y, seed=seed, feature_space=feature_space,
                           **(hyperparams or {}))


# ---------------------------------------------------------------------------
# rebalancing


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def random_oversample(X, y, seed=0):
    """Duplicate minority rows (with replacement) until classes are equal,
    then shuffle the row order."""
    X = np.asarray(X)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise DataError("oversampling needs at least 2 classes")
    target = counts.max()
    rng = _as_generator(seed)
    xs = [X]
    ys = [y]
    for c, k in zip(classes, counts):
        if k < target:
            idx = np.flatnonzero(y == c)
            extra = rng.choice(idx, size=target - k, replace=True)
            xs.append(X[extra])
            ys.append(y[extra])
    X2 = np.concatenate(xs)
    y2 = np.concatenate(ys)
    perm = rng.permutation(len(y2))
    return X2[perm], y2[perm]


def smote(X, y, k: int = 5, seed=0):
    """Equalize class counts with synthetic interpolated minority samples.

    Each synthetic point is x_i + u (x_j - x_i) for a random minority row
    x_i, one of its k nearest same-class neighbours x_j (Euclidean,
    k clamped to class size - 1) and u ~ Uniform(0,1). Balanced input is
    returned unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    target = counts.max()
    if all(c == target for c in counts):
        return X, y
    rng = _as_generator(seed)
    xs = [X]
    ys = [y]
    for c, cnt in zip(classes, counts):
        if cnt == target:
            continue
        if cnt < 2:
            raise DataError(f"smote: class {c!r} has {cnt} sample(s), need at least 2")
        rows = X[y == c]
        k_eff = min(k, cnt - 1)
        d2 = ((rows[:, None, :] - rows[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        # stable argsort so distance ties resolve by index
        neighbours = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]
        need = target - cnt
        synth = np.empty((need, X.shape[1]))
        for s in range(need):
            i = int(rng.integers(cnt))
            j = int(neighbours[i][int(rng.integers(k_eff))])
            u = rng.random()
            synth[s] = rows[i] + u * (rows[j] - rows[i])
        xs.append(synth)
        ys.append(np.full(need, c, dtype=y.dtype))
    return np.concatenate(xs), np.concatenate(ys)


# ---------------------------------------------------------------------------
# shared split


def stratified_split(strata: Sequence, train_frac: float, seed: int):
    """Seeded stratified split by largest-remainder apportionment.

    Returns (train_idx, val_idx), both sorted. Group quotas are floor(frac
    * size) with the leftover seats going to the largest fractional
    remainders (ties by group key), so the global train count is exactly
    round(frac * n).
    """
    n = len(strata)
    groups: dict[str, list[int]] = {}
    for i, s in enumerate(strata):
        groups.setdefault(str(s), []).append(i)
    keys = sorted(groups)
    target_train = int(round(train_frac * n))
    quotas = {}
    remainders = []
    floor_total = 0
    for key in keys:
        exact = train_frac * len(groups[key])
        q = int(np.floor(exact))
        quotas[key] = q
        floor_total += q
        remainders.append((-(exact - q), key))
    remainders.sort()
    for _, key in remainders[: max(0, target_train - floor_total)]:
        quotas[key] += 1
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    train, val = [], []
    for key in keys:
        idx = np.asarray(groups[key])
        perm = rng.permutation(len(idx))
        q = quotas[key]
        train.extend(idx[perm[:q]])
        val.extend(idx[perm[q:]])
    return np.array(sorted(train), dtype=np.int64), np.array(sorted(val), dtype=np.int64)


def _label_pattern(ls: AspectLabelSet) -> tuple:
    return tuple("NA" if ls.labels[a] is None else str(ls.labels[a]) for a in ASPECTS)


# ---------------------------------------------------------------------------
# aspect pipelines


@dataclass
class AspectPipeline:
    architecture: str                 # one_stage | two_stage
    feature_space: str
    models: dict                      # aspect -> {"sentiment": m[, "relevance": m]}
    train_indices: np.ndarray
    val_indices: np.ndarray
    seed: int
    embedding_digest: str | None = None


def _shared_split(label_sets: Sequence[AspectLabelSet], seed: int):
    return stratified_split([_label_pattern(ls) for ls in label_sets], 0.8, seed)


def train_one_stage(X, label_sets: Sequence[AspectLabelSet], seed: int = 0,
                    feature_space: str = "embedding", l2: float = 1e-4,
                    tol: float = 1e-6, max_iter: int = 1000) -> AspectPipeline:
    """Per aspect: NA folds into neutral and a 3-class model is fit on the
    shared 80% training rows."""
    X = _check_matrix(X)
    if X.shape[0] != len(label_sets):
        raise DataError("feature rows do not match label rows")
    train_idx, val_idx = _shared_split(label_sets, seed)
    models = {}
    for aspect in ASPECTS:
        y = np.array([0 if ls.labels[aspect] is None else ls.labels[aspect]
                      for ls in label_sets])
        y_train = y[train_idx]
        if len(set(y_train.tolist())) < 2:
            raise DataError(f"aspect {aspect}: single class in training data")
        m = train_logreg(X[train_idx], y_train, l2=l2, tol=tol, max_iter=max_iter,
                         feature_space=feature_space, seed=seed)
        models[aspect] = {"sentiment": m}
    return AspectPipeline(architecture="one_stage", feature_space=feature_space,
                          models=models, train_indices=train_idx, val_indices=val_idx,
                          seed=seed)


def train_two_stage(X, label_sets: Sequence[AspectLabelSet], seed: int = 0,
                    feature_space: str = "embedding", l2: float = 1e-4,
                    tol: float = 1e-6, max_iter: int = 1000) -> AspectPipeline:
    """Stage 1 binary relevance, stage 2 three-class sentiment trained on
    the relevant training rows after random oversampling."""
    X = _check_matrix(X)
    if X.shape[0] != len(label_sets):
        raise DataError("feature rows do not match label rows")
    train_idx, val_idx = _shared_split(label_sets, seed)
    models = {}
    for a_i, aspect in enumerate(ASPECTS):
        raw = [ls.labels[aspect] for ls in label_sets]
        rel = np.array([IRRELEVANT if v is None else RELEVANT for v in raw], dtype=object)
        rel_train = rel[train_idx]
        if len(set(rel_train.tolist())) < 2:
            raise DataError(f"aspect {aspect}: single relevance class in training data")
        m_rel = train_logreg(X[train_idx], rel_train, l2=l2, tol=tol, max_iter=max_iter,
                             feature_space=feature_space, seed=seed)
        rel_rows = np.array([i for i in train_idx if raw[i] is not None])
        if len(rel_rows) == 0:
            raise DataError(f"aspect {aspect}: zero relevant training rows")
        y3 = np.array([raw[i] for i in rel_rows])
        if len(set(y3.tolist())) < 2:
            raise DataError(f"aspect {aspect}: single sentiment class among relevant rows")
        Xo, yo = random_oversample(X[rel_rows], y3,
                                   seed=np.random.SeedSequence((seed, a_i)))
        m_sent = train_logreg(Xo, yo.astype(np.int64), l2=l2, tol=tol, max_iter=max_iter,
                              feature_space=feature_space, seed=seed)
        models[aspect] = {"relevance": m_rel, "sentiment": m_sent}
    return AspectPipeline(architecture="two_stage", feature_space=feature_space,
                          models=models, train_indices=train_idx, val_indices=val_idx,
                          seed=seed)


def predict_matrix(pipeline: AspectPipeline, X) -> np.ndarray:
    """Predict the six-aspect sentiment matrix (n rows x 6 columns)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    out = np.zeros((n, len(ASPECTS)), dtype=np.int64)
    for j, aspect in enumerate(ASPECTS):
        ms = pipeline.models[aspect]
        if pipeline.architecture == "one_stage":
            out[:, j] = ms["sentiment"].predict(X).astype(np.int64)
        else:
            rel = ms["relevance"].predict(X)
            mask = rel == RELEVANT
            if mask.any():
                out[mask, j] = ms["sentiment"].predict(X[mask]).astype(np.int64)
    return out


def predict_sentiment_vector(pipeline: AspectPipeline, x) -> np.ndarray:
    return predict_matrix(pipeline, np.atleast_2d(x))[0]


def predict_corpus(pipeline: AspectPipeline, corpus: Iterable[CorpusRecord],
                   features, out_path: str | Path,
                   workers: int = 1, chunk_size: int = 512,
                   stopwords=None, lexicon=None) -> int:
    """Stream reviews through preprocess -> featurize -> predict and write
    the prediction CSV. ``features`` is the fitted EmbeddingModel or
    TfidfModel matching the pipeline's feature space. Output row order
    equals input order for any worker count. Returns the number of rows
    written."""

    def do_chunk(recs: list[CorpusRecord]) -> list[list[str]]:
        rows = []
        docs = [preprocess(r.text, stopwords, lexicon) for r in recs]
        if isinstance(features, TfidfModel):
            feats = transform_tfidf_many(features, docs)
        else:
            feats = np.stack([embed_review(features, d) for d in docs])
        preds = predict_matrix(pipeline, feats)
        for r, p in zip(recs, preds):
            rows.append([r.review_id] + [str(int(v)) for v in p])
        return rows

    def chunks():
        buf = []
        for rec in corpus:
            buf.append(rec)
            if len(buf) >= chunk_size:
                yield buf
                buf = []
        if buf:
            yield buf

    n = 0
    try:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LABEL_HEADER)
            if workers <= 1:
                results = map(do_chunk, chunks())
                for rows in results:
                    writer.writerows(rows)
                    n += len(rows)
            else:
                import concurrent.futures as cf
                from collections import deque
                with cf.ThreadPoolExecutor(max_workers=workers) as ex:
                    pending = deque()
                    it = chunks()
                    for chunk in it:
                        pending.append(ex.submit(do_chunk, chunk))
                        if len(pending) >= workers * 2:
                            rows = pending.popleft().result()
                            writer.writerows(rows)
                            n += len(rows)
                    while pending:
                        rows = pending.popleft().result()
                        writer.writerows(rows)
                        n += len(rows)
    except OSError as exc:
        raise DataError(f"prediction write failed after {n} rows: {exc}") from exc
    return n


# ---------------------------------------------------------------------------
# model / bundle files


def model_to_dict(model: ClassifierModel) -> dict:
    return {
        "kind": model.kind,
        "classes": [c if isinstance(c, str) else int(c) for c in model.classes],
        "weights": [[float(v) for v in row] for row in model.weights],
        "bias": [float(v) for v in model.bias],
        "feature_space": model.feature_space,
        "hyperparams": model.hyperparams,
        "seed": model.seed,
    }


def model_from_dict(obj: dict) -> ClassifierModel:
    return ClassifierModel(
        kind=obj["kind"],
        classes=list(obj["classes"]),
        weights=np.asarray(obj["weights"], dtype=np.float64),
        bias=np.asarray(obj["bias"], dtype=np.float64),
        feature_space=obj.get("feature_space", "embedding"),
        hyperparams=obj.get("hyperparams", {}),
        seed=obj.get("seed", 0),
    )


def save_pipeline(pipeline: AspectPipeline, bundle_dir: str | Path,
                  val_review_ids: list[str] | None = None,
                  train_review_ids: list[str] | None = None,
                  config_digest: str | None = None) -> Path:
    bundle_dir = Path(bundle_dir)
    bundle_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "architecture": pipeline.architecture,
        "feature_space": pipeline.feature_space,
        "aspects": list(ASPECTS),
        "seed": pipeline.seed,
        "embedding_digest": pipeline.embedding_digest,
        "train_indices": [int(i) for i in pipeline.train_indices],
        "val_indices": [int(i) for i in pipeline.val_indices],
    }
    if val_review_ids is not None:
        manifest["val_review_ids"] = val_review_ids
    if train_review_ids is not None:
        manifest["train_review_ids"] = train_review_ids
    if config_digest is not None:
        manifest["config_digest"] = config_digest
    for aspect in ASPECTS:
        for role, model in pipeline.models[aspect].items():
            with open(bundle_dir / f"{aspect}.{role}.json", "w", encoding="utf-8") as fh:
                json.dump(model_to_dict(model), fh)
                fh.write("\n")
    with open(bundle_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return bundle_dir


def load_pipeline(bundle_dir: str | Path) -> tuple[AspectPipeline, dict]:
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"input file not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    arch = manifest["architecture"]
    models = {}
    roles = ("sentiment",) if arch == "one_stage" else ("relevance", "sentiment")
    for aspect in ASPECTS:
        models[aspect] = {}
        for role in roles:
            p = bundle_dir / f"{aspect}.{role}.json"
            if not p.exists():
                raise DataError(f"input file not found: {p}")
            with open(p, "r", encoding="utf-8") as fh:
                models[aspect][role] = model_from_dict(json.load(fh))
    pipeline = AspectPipeline(
        architecture=arch,
        feature_space=manifest.get("feature_space", "embedding"),
        models=models,
        train_indices=np.asarray(manifest.get("train_indices", []), dtype=np.int64),
        val_indices=np.asarray(manifest.get("val_indices", []), dtype=np.int64),
        seed=manifest.get("seed", 0),
        embedding_digest=manifest.get("embedding_digest"),
    )
    return pipeline, manifest

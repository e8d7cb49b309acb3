"""The absa command line: one subcommand per pipeline stage.

Stages hand off through files (JSONL corpora, CSV labels and predictions,
JSON bundles), every artifact gets the effective config digest either
inline or in an <artifact>.meta.json sidecar, and logs go to stderr as one
JSON object per line. Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from .aspects import aspect_agreement, emit_prompt, load_responses, write_agreement_csv
from .classify import (_shared_split, load_pipeline, predict_corpus, save_pipeline,
                       train_one_stage, train_two_stage)
from .config import ASPECTS, REPORT_ASPECT_ORDER, RunConfig, load_config, write_meta
from .errors import DataError, UsageError
from .evaluate import (build_rating_table, classification_report,
                       compare_architectures, fleiss_kappa, pearson_agreement)
from .ingest import (CorpusFile, ParseDiagnostics, corpus_stats, load_labels,
                     parse_corpus, read_corpus, sample_reviews, write_corpus)
from .lda import lda_topic_table, write_topic_table
from .regress import (aggregate_restaurants, aggregate_rows, fit_model,
                      read_aggregates, render_markdown_table, write_aggregates,
                      write_effects_csv, write_report_csv)
from .testkit import SynthSpec, default_bank, generate
from .textprep import load_lemmas, load_stopwords, preprocess
from .vectorize import (EmbeddingParams, embed_many, fit_tfidf, load_embeddings,
                        load_tfidf, save_embeddings, save_tfidf,
                        train_embeddings, transform_tfidf_many)

ASPECT_DISPLAY = {"service": "Service", "ambiance": "Ambiance",
                  "food_quality": "Quality", "menu_variety": "Menu",
                  "wait_time": "Wait Time", "price": "Price"}


def _log(event: str, **fields) -> None:
    rec = {"event": event}
    rec.update(fields)
    print(json.dumps(rec, ensure_ascii=False, default=str), file=sys.stderr)


def _require_file(path, what: str = "input file") -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{what} not found: {p}")
    return p


def _coerce(current, value: str):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise UsageError(f"cannot parse boolean from {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for pair in args.set or []:
        if "=" not in pair:
            raise UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        key, _, value = pair.partition("=")
        if not hasattr(cfg, key):
            raise UsageError(f"unknown config key {key!r}")
        cfg = cfg.replace(**{key: _coerce(getattr(cfg, key), value)})
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.workers is not None:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        cfg = cfg.replace(workers=args.workers)
    return cfg


def _out_path(args, default_name: str | None = None) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    out = Path(args.out)
    if default_name is not None and (out.is_dir() or str(args.out).endswith("/")):
        out = out / default_name
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _out_dir(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _prep_resources(cfg: RunConfig):
    stopwords = load_stopwords(cfg.stopwords_path)
    lexicon = load_lemmas(cfg.lemmas_path)
    return stopwords, lexicon


class _TokenizedCorpus:
    """Re-iterable view of a corpus file as preprocessed token lists."""

    def __init__(self, path, stopwords, lexicon):
        self.path = path
        self.stopwords = stopwords
        self.lexicon = lexicon

    def __iter__(self):
        for rec in read_corpus(self.path):
            yield preprocess(rec.text, self.stopwords, self.lexicon)


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# featurization shared by train / evaluate / compare


def _labeled_texts(corpus_path: Path, label_sets) -> list[str]:
    needed = {ls.review_id for ls in label_sets}
    texts = {}
    for rec in read_corpus(corpus_path):
        if rec.review_id in needed:
            texts[rec.review_id] = rec.text
    missing = sorted(needed - set(texts))
    if missing:
        head = ", ".join(missing[:5])
        raise DataError(
            f"{len(missing)} labeled review ids missing from corpus ({head} ...)")
    return [texts[ls.review_id] for ls in label_sets]


def _features_for_labels(cfg, label_sets, corpus_path, feature_space,
                         emb_path=None, tfidf_model=None):
    stopwords, lexicon = _prep_resources(cfg)
    texts = _labeled_texts(corpus_path, label_sets)
    docs = [preprocess(t, stopwords, lexicon) for t in texts]
    if feature_space == "embedding":
        emb = load_embeddings(_require_file(emb_path, "embedding file"))
        return embed_many(emb, docs), docs, emb
    if tfidf_model is None:
        raise DataError("tfidf model required for tfidf feature space")
    return transform_tfidf_many(tfidf_model, docs), docs, tfidf_model


def _report_to_json(rep) -> dict:
    return {
        "classes": [c if isinstance(c, str) else int(c) for c in rep.classes],
        "accuracy": rep.accuracy,
        "precision": {str(c): rep.precision[c] for c in rep.classes},
        "recall": {str(c): rep.recall[c] for c in rep.classes},
        "f1": {str(c): rep.f1[c] for c in rep.classes},
        "support": {str(c): rep.support[c] for c in rep.classes},
    }


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_ingest(args, cfg: RunConfig) -> int:
    reviews = _require_file(args.reviews)
    business = _require_file(args.business)
    out = _out_path(args, "corpus.jsonl")
    diag = ParseDiagnostics()
    n = write_corpus(parse_corpus(reviews, business, diagnostics=diag), out)
    stats = corpus_stats(read_corpus(out))
    write_meta(out, cfg, diagnostics=diag.to_dict(), stats=stats)
    _log("ingest", records=n, out=str(out), **diag.to_dict())
    _log("corpus_stats", **{k: v for k, v in stats.items()
                            if not isinstance(v, dict)})
    return 0


def _cmd_sample(args, cfg: RunConfig) -> int:
    corpus = _require_file(args.corpus)
    out = _out_path(args, "sample.jsonl")
    if args.strategy == "uniform":
        if args.n is None:
            raise UsageError("--n is required for uniform sampling")
        strategy = {"kind": "uniform", "n": args.n}
    else:
        if args.businesses is None or args.per is None:
            raise UsageError("--businesses and --per are required for per-business sampling")
        strategy = {"kind": "per_business", "businesses": args.businesses,
                    "per": args.per, "state": args.state}
    picked = sample_reviews(CorpusFile(corpus), strategy, cfg.seed)
    write_corpus(picked, out)
    write_meta(out, cfg, strategy=strategy, records=len(picked))
    _log("sample", records=len(picked), out=str(out), strategy=strategy)
    return 0


def _cmd_synth(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    weights = SynthSpec().weights
    for pair in args.weight or []:
        if "=" not in pair:
            raise UsageError(f"--weight expects ASPECT=VALUE, got {pair!r}")
        aspect, _, value = pair.partition("=")
        if aspect not in ASPECTS:
            raise UsageError(f"unknown aspect {aspect!r}")
        weights[aspect] = float(value)
    spec = SynthSpec(n_businesses=args.businesses, reviews_per_business=args.per,
                     weights=weights, sigma=args.sigma, seed=cfg.seed,
                     templates=default_bank(overlap=True) if args.overlap else None)
    generate(spec, out)
    write_meta(out / "synth", cfg, weights=weights, sigma=args.sigma,
               businesses=args.businesses, per=args.per, overlap=args.overlap)
    _log("synth", out=str(out), reviews=args.businesses * args.per)
    return 0


def _cmd_prompt(args, cfg: RunConfig) -> int:
    corpus = _require_file(args.corpus)
    records = list(read_corpus(corpus))
    if not records:
        raise DataError(f"no records in {corpus}")
    if args.per_business:
        out = _out_dir(args)
        by_biz: dict[str, list] = {}
        for rec in records:
            by_biz.setdefault(rec.business_id, []).append(rec)
        for biz in sorted(by_biz):
            recs = sorted(by_biz[biz], key=lambda r: r.review_id)
            with open(out / f"{biz}.txt", "w", encoding="utf-8", newline="\n") as fh:
                fh.write(emit_prompt(recs))
        write_meta(out / "prompts", cfg, businesses=len(by_biz))
        _log("prompt", businesses=len(by_biz), out=str(out))
    else:
        out = _out_path(args, "prompt.txt")
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(emit_prompt(records))
        write_meta(out, cfg, reviews=len(records))
        _log("prompt", reviews=len(records), out=str(out))
    return 0


def _cmd_aspects_agree(args, cfg: RunConfig) -> int:
    out = _out_path(args, "aspect_agreement.csv")
    resp_a = load_responses(_require_file(args.responses_a))
    resp_b = load_responses(_require_file(args.responses_b))
    stats = aspect_agreement(resp_a, resp_b)
    write_agreement_csv(stats, out)
    write_meta(out, cfg, businesses=len({r.business_id for r in resp_a}))
    _log("aspects_agree", out=str(out),
         aspects={a: [occ, agr] for a, (occ, agr) in stats.items()})
    return 0


def _cmd_train_embeddings(args, cfg: RunConfig) -> int:
    corpus = _require_file(args.corpus)
    out = _out_path(args, "embeddings.bin")
    stopwords, lexicon = _prep_resources(cfg)
    params = EmbeddingParams(
        dim=cfg.emb_dim, min_n=cfg.emb_min_n, max_n=cfg.emb_max_n,
        window=cfg.emb_window, epochs=cfg.emb_epochs, lr=cfg.emb_lr,
        negatives=cfg.emb_negatives, min_count=cfg.emb_min_count,
        bucket_count=cfg.emb_bucket_count)
    docs = _TokenizedCorpus(corpus, stopwords, lexicon)
    model = train_embeddings(docs, params=params, seed=cfg.seed)
    save_embeddings(model, out)
    write_meta(out, cfg, vocab_size=len(model.vocab), dim=model.dim)
    _log("train_embeddings", vocab=len(model.vocab), dim=model.dim, out=str(out))
    return 0


def _cmd_train(args, cfg: RunConfig) -> int:
    labels_path = _require_file(args.labels, "label file")
    corpus = _require_file(args.corpus)
    out = _out_dir(args)
    label_sets = load_labels(labels_path)
    arch = args.arch.replace("-", "_")
    feature_space = args.features
    tfidf_model = None
    emb_digest = None
    if feature_space == "tfidf":
        stopwords, lexicon = _prep_resources(cfg)
        texts = _labeled_texts(corpus, label_sets)
        docs = [preprocess(t, stopwords, lexicon) for t in texts]
        train_idx, _ = _shared_split(label_sets, cfg.seed)
        tfidf_model = fit_tfidf([docs[i] for i in train_idx],
                                max_features=cfg.tfidf_max_features)
        X = transform_tfidf_many(tfidf_model, docs)
    else:
        if args.emb is None:
            raise UsageError("--emb is required for embedding features")
        X, _, _ = _features_for_labels(cfg, label_sets, corpus, "embedding",
                                       emb_path=args.emb)
        emb_digest = _file_digest(Path(args.emb))
    trainer = train_one_stage if arch == "one_stage" else train_two_stage
    pipeline = trainer(X, label_sets, seed=cfg.seed, feature_space=feature_space,
                       l2=cfg.logreg_l2, tol=cfg.logreg_tol,
                       max_iter=cfg.logreg_max_iter)
    pipeline.embedding_digest = emb_digest
    save_pipeline(pipeline, out,
                  val_review_ids=[label_sets[i].review_id
                                  for i in pipeline.val_indices],
                  train_review_ids=[label_sets[i].review_id
                                    for i in pipeline.train_indices],
                  config_digest=cfg.digest())
    if tfidf_model is not None:
        save_tfidf(tfidf_model, out / "tfidf.json", config_digest=cfg.digest())
    _log("train", architecture=arch, features=feature_space,
         train=len(pipeline.train_indices), val=len(pipeline.val_indices),
         out=str(out))
    return 0


def _load_bundle_features(args, cfg: RunConfig, bundle_dir: Path, manifest: dict):
    """The fitted feature model (embedding or tfidf) a bundle predicts with."""
    if manifest.get("feature_space") == "tfidf":
        return load_tfidf(_require_file(bundle_dir / "tfidf.json"))
    if args.emb is None:
        raise UsageError("--emb is required for embedding-feature bundles")
    emb_path = _require_file(args.emb, "embedding file")
    expected = manifest.get("embedding_digest")
    if expected and _file_digest(emb_path) != expected:
        raise DataError(f"embedding file {emb_path} does not match the digest "
                        "recorded in the bundle manifest")
    return load_embeddings(emb_path)


def _cmd_predict(args, cfg: RunConfig) -> int:
    bundle = Path(args.bundle)
    pipeline, manifest = load_pipeline(bundle)
    corpus = _require_file(args.corpus)
    out = _out_path(args, "predictions.csv")
    features = _load_bundle_features(args, cfg, bundle, manifest)
    stopwords, lexicon = _prep_resources(cfg)
    n = predict_corpus(pipeline, CorpusFile(corpus), features, out,
                       workers=cfg.workers, stopwords=stopwords, lexicon=lexicon)
    write_meta(out, cfg, rows=n, bundle=str(bundle),
               architecture=pipeline.architecture)
    _log("predict", rows=n, out=str(out), workers=cfg.workers)
    return 0


def _bundle_eval_arrays(args, cfg, bundle_dir):
    """Load a bundle plus its labels and featurize the validation rows."""
    pipeline, manifest = load_pipeline(bundle_dir)
    label_sets = load_labels(_require_file(args.labels, "label file"))
    n = len(label_sets)
    val_idx = np.asarray(manifest["val_indices"], dtype=np.int64)
    train_idx = np.asarray(manifest["train_indices"], dtype=np.int64)
    if len(val_idx) + len(train_idx) != n or (len(val_idx) and val_idx.max() >= n):
        raise DataError("label file does not match the bundle's split")
    ids = manifest.get("val_review_ids")
    if ids is not None:
        actual = [label_sets[i].review_id for i in val_idx]
        if actual != ids:
            raise DataError("label file rows do not match the bundle's validation ids")
    features = _load_bundle_features(args, cfg, Path(bundle_dir), manifest)
    stopwords, lexicon = _prep_resources(cfg)
    texts = _labeled_texts(_require_file(args.corpus), label_sets)
    docs = [preprocess(t, stopwords, lexicon) for t in texts]
    if pipeline.feature_space == "tfidf":
        X = transform_tfidf_many(features, docs)
    else:
        X = embed_many(features, docs)
    return pipeline, manifest, label_sets, X, val_idx


def _cmd_evaluate(args, cfg: RunConfig) -> int:
    if args.annotations:
        return _evaluate_annotations(args, cfg)
    if not (args.bundle and args.labels and args.corpus):
        raise UsageError("evaluate needs either --annotations or "
                         "--bundle/--labels/--corpus")
    out = _out_path(args, "metrics.json")
    pipeline, manifest, label_sets, X, val_idx = _bundle_eval_arrays(
        args, cfg, args.bundle)
    X_val = X[val_idx]
    labels_val = [label_sets[i] for i in val_idx]
    per_aspect = {}
    for aspect in ASPECTS:
        raw = [ls.labels[aspect] for ls in labels_val]
        entry = {}
        if pipeline.architecture == "one_stage":
            truth = [0 if v is None else v for v in raw]
            pred = [int(v) for v in
                    pipeline.models[aspect]["sentiment"].predict(X_val)]
            entry["sentiment"] = _report_to_json(classification_report(truth, pred))
        else:
            rel_truth = ["irrelevant" if v is None else "relevant" for v in raw]
            rel_pred = [str(v) for v in
                        pipeline.models[aspect]["relevance"].predict(X_val)]
            entry["relevance"] = _report_to_json(
                classification_report(rel_truth, rel_pred))
            mask = np.array([v is not None for v in raw])
            if mask.any():
                truth = [v for v in raw if v is not None]
                pred = [int(v) for v in
                        pipeline.models[aspect]["sentiment"].predict(X_val[mask])]
                entry["sentiment"] = _report_to_json(
                    classification_report(truth, pred))
            else:
                entry["sentiment"] = None
        per_aspect[aspect] = entry
    payload = {
        "architecture": pipeline.architecture,
        "feature_space": pipeline.feature_space,
        "n_labeled": len(label_sets),
        "n_val": int(len(val_idx)),
        "config_digest": cfg.digest(),
        "aspects": per_aspect,
    }
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    accs = {a: per_aspect[a]["sentiment"]["accuracy"]
            for a in ASPECTS if per_aspect[a]["sentiment"]}
    _log("evaluate", architecture=pipeline.architecture, out=str(out),
         accuracy=accs)
    return 0


def _evaluate_annotations(args, cfg: RunConfig) -> int:
    if len(args.annotations) < 2:
        raise UsageError("--annotations needs at least two label files")
    out = _out_path(args, "agreement.json")
    rater_sets = [load_labels(_require_file(p, "annotation file"))
                  for p in args.annotations]
    base_ids = [ls.review_id for ls in rater_sets[0]]
    by_id = []
    for p, label_sets in zip(args.annotations, rater_sets):
        d = {ls.review_id: ls for ls in label_sets}
        if sorted(d) != sorted(base_ids):
            raise DataError(f"{p}: review ids do not match {args.annotations[0]}")
        by_id.append(d)
    categories = [-1, 0, 1, None]
    aspects_out = {}
    for aspect in ASPECTS:
        rows = [[d[rid].labels[aspect] for rid in base_ids] for d in by_id]
        table = build_rating_table(rows, categories)
        kappa = fleiss_kappa(table)
        scores = np.array([[np.nan if v is None else float(v) for v in row]
                           for row in rows])
        pearson = pearson_agreement(scores)
        aspects_out[aspect] = {
            "fleiss_kappa": kappa,
            "pearson_r": [[None if np.isnan(v) else v for v in row]
                          for row in pearson["r"]],
            "pearson_p": [[None if np.isnan(v) else v for v in row]
                          for row in pearson["p"]],
            "pearson_n_items": [[int(v) for v in row]
                                for row in pearson["n_items"]],
            "pearson_mean": (None if np.isnan(pearson["mean_off_diagonal"])
                             else pearson["mean_off_diagonal"]),
        }
    payload = {
        "n_raters": len(rater_sets),
        "n_items": len(base_ids),
        "config_digest": cfg.digest(),
        "aspects": aspects_out,
    }
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log("evaluate_annotations", out=str(out),
         kappa={a: aspects_out[a]["fleiss_kappa"] for a in ASPECTS})
    return 0


def _cmd_compare(args, cfg: RunConfig) -> int:
    out = _out_path(args, "mcnemar.json")
    pipe_a, man_a, labels_a, X, val_idx = _bundle_eval_arrays(
        args, cfg, args.one_stage)
    pipe_b, man_b = load_pipeline(args.two_stage)
    if pipe_a.architecture != "one_stage" or pipe_b.architecture != "two_stage":
        raise DataError("--one-stage and --two-stage bundles have the wrong "
                        "architectures")
    if man_a["val_indices"] != man_b["val_indices"]:
        raise DataError("bundles were trained on different splits")
    if man_a.get("feature_space") != man_b.get("feature_space"):
        raise DataError("bundles use different feature spaces")
    labels_val = [labels_a[i] for i in val_idx]
    results = compare_architectures(pipe_a, pipe_b, X[val_idx], labels_val)
    payload = {"n_val": int(len(val_idx)), "config_digest": cfg.digest(),
               "aspects": {}}
    for aspect, res in results.items():
        payload["aspects"][aspect] = None if res is None else {
            "n01": res.n01, "n10": res.n10,
            "chi_square": res.chi_square, "one_sided_p": res.one_sided_p}
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log("compare", out=str(out), aspects=payload["aspects"])
    return 0


def _cmd_aggregate(args, cfg: RunConfig) -> int:
    corpus = _require_file(args.corpus)
    out = _out_path(args, "aggregates.csv")
    if args.predictions:
        aggs = aggregate_restaurants(_require_file(args.predictions), CorpusFile(corpus))
        source = args.predictions
    else:
        label_sets = load_labels(_require_file(args.labels, "label file"))
        rows = [(ls.review_id,
                 {a: 0 if ls.labels[a] is None else ls.labels[a] for a in ASPECTS})
                for ls in label_sets]
        aggs = aggregate_rows(rows, CorpusFile(corpus))
        source = args.labels
    write_aggregates(aggs, out)
    write_meta(out, cfg, businesses=len(aggs), source=str(source))
    _log("aggregate", businesses=len(aggs), out=str(out))
    return 0


def _cmd_regress(args, cfg: RunConfig) -> int:
    aggs = read_aggregates(_require_file(args.aggregates, "aggregate file"))
    out = _out_dir(args)
    specs = (1, 2, 3, 4) if args.spec == "all" else (int(args.spec),)
    reports = [fit_model(aggs, s) for s in specs]
    for rep in reports:
        write_report_csv(rep, out / f"model{rep.spec_id}.csv")
        write_effects_csv(rep, out / f"effects{rep.spec_id}.csv")
    with open(out / "regression.md", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_markdown_table(reports))
    write_meta(out / "regression", cfg, n=len(aggs), specs=list(specs),
               r2={rep.spec_id: rep.r2 for rep in reports})
    _log("regress", out=str(out), n=len(aggs),
         r2={rep.spec_id: round(rep.r2, 6) for rep in reports})
    return 0


def _cmd_lda(args, cfg: RunConfig) -> int:
    corpus = _require_file(args.corpus)
    out = _out_path(args, "topics.jsonl")
    stopwords, lexicon = _prep_resources(cfg)
    rows = lda_topic_table(
        CorpusFile(corpus), n_topics=cfg.lda_topics, alpha=cfg.lda_alpha,
        beta=cfg.lda_beta, iterations=cfg.lda_iterations,
        top_k=cfg.lda_top_words, seed=cfg.seed,
        per_restaurant=not args.pooled, workers=cfg.workers,
        stopwords=stopwords, lexicon=lexicon)
    write_topic_table(rows, out)
    write_meta(out, cfg, models=len(rows), pooled=args.pooled)
    _log("lda", models=len(rows), out=str(out), pooled=args.pooled)
    return 0


# ---------------------------------------------------------------------------
# report rendering


def _metrics_table(payload: dict, block: str) -> list[list[str]]:
    """Rows (metric x class blocks) by aspect columns."""
    if block == "relevance":
        class_rows = [("relevant", "Relevant"), ("irrelevant", "Irrelevant")]
    else:
        class_rows = [("-1", "Negative"), ("0", "Neutral"), ("1", "Positive")]
        if payload["architecture"] == "one_stage":
            class_rows[1] = ("0", "Neutral/Irrelevant")
    header = ["Metric"] + [ASPECT_DISPLAY[a] for a in REPORT_ASPECT_ORDER]
    rows = [header]
    aspects = payload["aspects"]

    def cell(aspect, part, metric, cls):
        rep = aspects[aspect].get(part)
        if rep is None:
            return ""
        value = rep[metric].get(cls)
        if value is None:
            return ""
        return repr(round(value, 6)) if metric != "support" else str(value)

    for cls, label in class_rows:
        for metric, mlabel in (("precision", "Precision"), ("recall", "Recall"),
                               ("f1", "F1-Score"), ("support", "Support")):
            row = [f"{label} {mlabel}"]
            for a in REPORT_ASPECT_ORDER:
                row.append(cell(a, block, metric, cls))
            rows.append(row)
    acc_row = ["Accuracy"]
    for a in REPORT_ASPECT_ORDER:
        rep = aspects[a].get(block)
        acc_row.append("" if rep is None else repr(round(rep["accuracy"], 6)))
    rows.append(acc_row)
    return rows


def _rows_to_csv(rows: list[list[str]]) -> str:
    return "\n".join(",".join(cell for cell in row) for row in rows) + "\n"


def _rows_to_markdown(rows: list[list[str]]) -> str:
    out = ["| " + " | ".join(rows[0]) + " |",
           "|---" * len(rows[0]) + "|"]
    for row in rows[1:]:
        out.append("| " + " | ".join(row) + " |")
    return "\n".join(out) + "\n"


def _cmd_report(args, cfg: RunConfig) -> int:
    art_dir = Path(args.artifacts)
    if not art_dir.is_dir():
        raise DataError(f"artifact directory not found: {art_dir}")
    out = Path(args.out) if args.out else None
    if out is None:
        raise UsageError("--out is required")

    outputs: dict[str, str] = {}   # filename -> content
    md_parts: list[str] = ["# Pipeline report\n"]

    metrics_files = sorted(art_dir.glob("metrics*.json"))
    for path in metrics_files:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        arch = payload["architecture"]
        if arch == "two_stage":
            rel_rows = _metrics_table(payload, "relevance")
            outputs[f"{arch}_relevance.csv"] = _rows_to_csv(rel_rows)
            md_parts.append("## Two-stage classifier, stage 1 (relevance)\n\n"
                            + _rows_to_markdown(rel_rows))
        rows = _metrics_table(payload, "sentiment")
        outputs[f"{arch}_sentiment.csv"] = _rows_to_csv(rows)
        title = ("One-stage classifier" if arch == "one_stage"
                 else "Two-stage classifier, stage 2 (sentiment)")
        md_parts.append(f"## {title}\n\n" + _rows_to_markdown(rows))

    mcnemar_path = art_dir / "mcnemar.json"
    if mcnemar_path.exists():
        with open(mcnemar_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        rows = [["Aspect", "n01", "n10", "chi_square", "one_sided_p"]]
        for a in REPORT_ASPECT_ORDER:
            res = payload["aspects"].get(a)
            if res is None:
                rows.append([ASPECT_DISPLAY[a], "", "", "", ""])
            else:
                rows.append([ASPECT_DISPLAY[a], str(res["n01"]), str(res["n10"]),
                             repr(round(res["chi_square"], 6)),
                             repr(res["one_sided_p"])])
        outputs["mcnemar.csv"] = _rows_to_csv(rows)
        md_parts.append("## Architecture comparison (one-sided McNemar)\n\n"
                        + _rows_to_markdown(rows))

    agreement_path = art_dir / "agreement.json"
    if agreement_path.exists():
        with open(agreement_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        rows = [["Aspect", "fleiss_kappa", "pearson_mean"]]
        for a in REPORT_ASPECT_ORDER:
            entry = payload["aspects"][a]
            mean = entry["pearson_mean"]
            rows.append([ASPECT_DISPLAY[a], repr(round(entry["fleiss_kappa"], 6)),
                         "" if mean is None else repr(round(mean, 6))])
        outputs["agreement.csv"] = _rows_to_csv(rows)
        md_parts.append("## Inter-annotator agreement\n\n" + _rows_to_markdown(rows))

    agree_csv = art_dir / "aspect_agreement.csv"
    if agree_csv.exists():
        outputs["aspect_agreement.csv"] = agree_csv.read_text(encoding="utf-8")
        lines = outputs["aspect_agreement.csv"].strip().splitlines()
        rows = [line.split(",") for line in lines]
        md_parts.append("## Aspect discovery agreement\n\n" + _rows_to_markdown(rows))

    regression_md = art_dir / "regression.md"
    if regression_md.exists():
        md_parts.append("## Regression models\n\n"
                        + regression_md.read_text(encoding="utf-8"))
    effects = sorted(art_dir.glob("effects*.csv"))

    if not outputs and not regression_md.exists() and not effects:
        raise DataError(f"no report artifacts found in {art_dir}")

    out.mkdir(parents=True, exist_ok=True)
    for name, content in outputs.items():
        with open(out / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
    for path in effects:
        target = out / path.name
        if path.resolve() != target.resolve():
            shutil.copyfile(path, target)
    with open(out / "report.md", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(md_parts))
    write_meta(out / "report", cfg, rendered=sorted(outputs) + ["report.md"])
    _log("report", out=str(out), rendered=sorted(outputs))
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="RNG seed (u64)")
    common.add_argument("--workers", type=int, help="worker thread count")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a single config value")

    parser = argparse.ArgumentParser(
        prog="absa",
        description="Aspect-based sentiment analysis pipeline over restaurant reviews.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common],
                       help="parse raw review/business dumps into a corpus")
    p.add_argument("--reviews", required=True)
    p.add_argument("--business", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("sample", parents=[common], help="draw a seeded sample")
    p.add_argument("--corpus", required=True)
    p.add_argument("--strategy", choices=("uniform", "per-business"),
                   default="uniform")
    p.add_argument("--n", type=int)
    p.add_argument("--businesses", type=int)
    p.add_argument("--per", type=int)
    p.add_argument("--state")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic corpus with ground truth")
    p.add_argument("--businesses", type=int, required=True)
    p.add_argument("--per", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--weight", action="append", metavar="ASPECT=VALUE")
    p.add_argument("--overlap", action="store_true",
                   help="share sentiment words across aspects")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("prompt", parents=[common],
                       help="emit the aspect-discovery prompt over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--per-business", action="store_true")
    p.set_defaults(func=_cmd_prompt)

    p = sub.add_parser("aspects-agree", parents=[common],
                       help="occurrence/agreement stats over two response files")
    p.add_argument("--responses-a", required=True)
    p.add_argument("--responses-b", required=True)
    p.set_defaults(func=_cmd_aspects_agree)

    p = sub.add_parser("train-embeddings", parents=[common],
                       help="train subword skip-gram embeddings")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=_cmd_train_embeddings)

    p = sub.add_parser("train", parents=[common],
                       help="train a one-stage or two-stage pipeline")
    p.add_argument("--arch", choices=("one-stage", "two-stage"), required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--emb")
    p.add_argument("--features", choices=("embedding", "tfidf"),
                   default="embedding")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", parents=[common],
                       help="predict aspect sentiments for a corpus")
    p.add_argument("--bundle", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--emb")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", parents=[common],
                       help="bundle metrics, or annotator agreement with --annotations")
    p.add_argument("--bundle")
    p.add_argument("--labels")
    p.add_argument("--corpus")
    p.add_argument("--emb")
    p.add_argument("--annotations", nargs="+",
                   help="two or more label CSVs from independent annotators")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", parents=[common],
                       help="one-sided McNemar comparison of the two architectures")
    p.add_argument("--one-stage", required=True, dest="one_stage")
    p.add_argument("--two-stage", required=True, dest="two_stage")
    p.add_argument("--labels", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--emb")
    p.set_defaults(func=_cmd_compare, bundle=None)

    p = sub.add_parser("aggregate", parents=[common],
                       help="aggregate predictions (or labels) per business")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--predictions")
    group.add_argument("--labels")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("regress", parents=[common],
                       help="fit the rating regressions over aggregates")
    p.add_argument("--aggregates", required=True)
    p.add_argument("--spec", choices=("1", "2", "3", "4", "all"), default="all")
    p.set_defaults(func=_cmd_regress)

    p = sub.add_parser("lda", parents=[common],
                       help="collapsed-Gibbs LDA per sentiment group")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pooled", action="store_true",
                   help="one model per sentiment group instead of per business")
    p.set_defaults(func=_cmd_lda)

    p = sub.add_parser("report", parents=[common],
                       help="render metric/agreement/regression tables")
    p.add_argument("--artifacts", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        _log("usage_error", message=str(exc))
        return 2
    except DataError as exc:
        _log("error", message=str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Full pipeline run against the public Yelp Open Dataset.

Point --yelp-dir at a directory containing yelp_academic_dataset_review.json
and yelp_academic_dataset_business.json. The script ingests the restaurant
subset, prints corpus statistics, draws the annotation sample, emits
aspect-discovery prompts, trains subword embeddings, and fits per-business
LDA topics. If an aspect-label CSV is supplied via --labels (the released
dataset ships none), it also trains and evaluates both classifier
architectures and runs the rating regressions.

Expect the ingest pass alone to take ~10 minutes on the full dump; embedding
training over 4.7M reviews is hours of CPU, so --sample-corpus caps the
corpus used for embeddings and LDA (0 disables the cap).
"""

import argparse
import json
import sys
import time
from pathlib import Path

from absa import cli


def run(argv, label):
    t0 = time.time()
    rc = cli.main([str(a) for a in argv])
    print(f"[{label}] exit={rc} ({time.time() - t0:.1f}s)")
    if rc != 0:
        sys.exit(f"stage {label!r} failed with exit code {rc}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--yelp-dir", required=True)
    ap.add_argument("--workdir", default="runs/yelp")
    ap.add_argument("--labels", help="aspect label CSV keyed by review_id")
    ap.add_argument("--sample-n", type=int, default=5000)
    ap.add_argument("--sample-corpus", type=int, default=200000,
                    help="uniform subsample size for embeddings/LDA, 0 = full corpus")
    ap.add_argument("--topics", type=int, default=5)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    src = Path(args.yelp_dir)
    reviews = src / "yelp_academic_dataset_review.json"
    business = src / "yelp_academic_dataset_business.json"
    for f in (reviews, business):
        if not f.exists():
            sys.exit(f"missing dataset file: {f}")

    wd = Path(args.workdir)
    wd.mkdir(parents=True, exist_ok=True)
    corpus = wd / "corpus.jsonl"

    run(["ingest", "--reviews", reviews, "--business", business, "--out", corpus], "ingest")
    meta = json.loads(Path(str(corpus) + ".meta.json").read_text())
    stats = meta["stats"]
    print(f"reviews={stats['n_reviews']} businesses={stats['n_businesses']} "
          f"users={stats['n_users']} mean_stars={stats['mean_review_rating']:.3f} "
          f"PA={stats['reviews_per_state'].get('PA', 0)}")

    run(["sample", "--corpus", corpus, "--strategy", "uniform", "--n", args.sample_n,
         "--seed", args.seed, "--out", wd / "annotation_sample.jsonl"], "sample")
    run(["prompt", "--corpus", wd / "annotation_sample.jsonl", "--per-business", "10",
         "--out", wd / "prompts"], "prompt")

    emb_corpus = corpus
    if args.sample_corpus:
        emb_corpus = wd / "corpus_sub.jsonl"
        run(["sample", "--corpus", corpus, "--strategy", "uniform",
             "--n", args.sample_corpus, "--seed", args.seed + 1,
             "--out", emb_corpus], "subsample corpus")
    run(["train-embeddings", "--corpus", emb_corpus, "--seed", args.seed,
         "--out", wd / "emb.bin"], "train-embeddings")

    if args.labels:
        for arch in ("one-stage", "two-stage"):
            run(["train", "--arch", arch, "--labels", args.labels, "--corpus", corpus,
                 "--emb", wd / "emb.bin", "--seed", args.seed,
                 "--out", wd / f"bundle_{arch}"], f"train {arch}")
            run(["evaluate", "--bundle", wd / f"bundle_{arch}", "--labels", args.labels,
                 "--corpus", corpus, "--emb", wd / "emb.bin",
                 "--out", wd / f"metrics_{arch}.json"], f"evaluate {arch}")
        run(["compare", "--one-stage", wd / "bundle_one-stage",
             "--two-stage", wd / "bundle_two-stage", "--labels", args.labels,
             "--corpus", corpus, "--emb", wd / "emb.bin",
             "--out", wd / "mcnemar.json"], "compare")
        run(["predict", "--bundle", wd / "bundle_one-stage", "--corpus", corpus,
             "--emb", wd / "emb.bin", "--workers", args.workers,
             "--out", wd / "predictions.csv"], "predict")
        run(["aggregate", "--predictions", wd / "predictions.csv", "--corpus", corpus,
             "--out", wd / "aggregates.csv"], "aggregate")
        run(["regress", "--aggregates", wd / "aggregates.csv", "--spec", "all",
             "--out", wd / "regression"], "regress")

    run(["lda", "--corpus", emb_corpus, "--set", f"lda_topics={args.topics}",
         "--seed", args.seed, "--workers", args.workers,
         "--out", wd / "topics.jsonl"], "lda")
    if args.labels:
        run(["report", "--artifacts", wd, "--out", wd / "report.md"], "report")
    print(f"done, artifacts in {wd}/")


if __name__ == "__main__":
    main()

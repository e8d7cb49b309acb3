"""End-to-end pipeline run on a synthetic corpus.

Generates a labeled synthetic review corpus, then drives every pipeline
stage through the CLI entry point: ingest, embedding training, classifier
training (both architectures), prediction, evaluation, architecture
comparison, aggregation, regression, LDA, and the final report.

Artifacts land under --workdir (default runs/synth_e2e). The script prints
per-stage timings and a short metric summary at the end.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from absa import cli


def run(argv, label):
    t0 = time.time()
    rc = cli.main([str(a) for a in argv])
    dt = time.time() - t0
    print(f"[{label}] exit={rc} ({dt:.1f}s)")
    if rc != 0:
        sys.exit(f"stage {label!r} failed with exit code {rc}")
    return dt


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", default="runs/synth_e2e")
    ap.add_argument("--businesses", type=int, default=200)
    ap.add_argument("--reviews-per", type=int, default=30)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args()

    wd = Path(args.workdir)
    wd.mkdir(parents=True, exist_ok=True)
    synth = wd / "synth"
    t_all = time.time()

    run(["synth", "--businesses", args.businesses, "--per", args.reviews_per,
         "--seed", args.seed, "--out", synth], "synth")
    run(["ingest", "--reviews", synth / "reviews.jsonl", "--business", synth / "businesses.jsonl",
         "--out", wd / "corpus.jsonl"], "ingest")
    # A small hash table is plenty for the synthetic vocabulary and keeps the
    # embedding file compact.
    run(["train-embeddings", "--corpus", wd / "corpus.jsonl",
         "--set", "emb_bucket_count=65536", "--set", "emb_epochs=3",
         "--set", "emb_min_count=2", "--seed", args.seed,
         "--out", wd / "emb.bin"], "train-embeddings")

    for arch in ("one-stage", "two-stage"):
        run(["train", "--arch", arch, "--labels", synth / "labels.csv",
             "--corpus", wd / "corpus.jsonl", "--emb", wd / "emb.bin",
             "--seed", args.seed, "--out", wd / f"bundle_{arch}"], f"train {arch}")
        run(["evaluate", "--bundle", wd / f"bundle_{arch}", "--labels", synth / "labels.csv",
             "--corpus", wd / "corpus.jsonl", "--emb", wd / "emb.bin",
             "--out", wd / f"metrics_{arch}.json"], f"evaluate {arch}")

    run(["compare", "--one-stage", wd / "bundle_one-stage", "--two-stage", wd / "bundle_two-stage",
         "--labels", synth / "labels.csv", "--corpus", wd / "corpus.jsonl",
         "--emb", wd / "emb.bin", "--out", wd / "mcnemar.json"], "compare")
    run(["predict", "--bundle", wd / "bundle_one-stage", "--corpus", wd / "corpus.jsonl",
         "--emb", wd / "emb.bin", "--workers", args.workers,
         "--out", wd / "predictions.csv"], "predict")

    # Regression on ground-truth labels recovers the generative weights;
    # aggregates of model predictions are also written for comparison.
    run(["aggregate", "--labels", synth / "labels.csv", "--corpus", wd / "corpus.jsonl",
         "--out", wd / "agg_truth.csv"], "aggregate truth")
    run(["aggregate", "--predictions", wd / "predictions.csv", "--corpus", wd / "corpus.jsonl",
         "--out", wd / "agg_pred.csv"], "aggregate pred")
    run(["regress", "--aggregates", wd / "agg_truth.csv", "--spec", "all",
         "--out", wd / "regression"], "regress")
    run(["lda", "--corpus", wd / "corpus.jsonl", "--set", "lda_topics=5",
         "--set", "lda_iterations=200", "--seed", args.seed,
         "--workers", args.workers, "--out", wd / "topics.jsonl"], "lda")
    run(["report", "--artifacts", wd, "--out", wd / "report.md"], "report")

    print(f"\ntotal {time.time() - t_all:.1f}s, artifacts in {wd}/")
    for arch in ("one-stage", "two-stage"):
        blob = json.loads((wd / f"metrics_{arch}.json").read_text())
        accs = {a: round(m["sentiment"]["accuracy"], 3) for a, m in blob["aspects"].items()}
        print(f"{arch} validation accuracy by aspect: {accs}")
    with open(wd / "regression" / "model1.csv") as fh:
        for row in csv.DictReader(fh):
            if row["term"] in ("avg_food_quality", "avg_service", "r_squared"):
                print(f"model 1 {row['term']}: {row['estimate']}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Run the whole enrichment loop on a synthetic corpus, end to end.

Steps: corpus generation, detail mining, toy image embeddings, prompt
tuning on the frozen decoder, enriched-caption generation with the
similarity filter, hard-pool curation, and evaluation with JSON/CSV/SVG
reports.  Every step goes through the capenrich CLI entry points, so
this doubles as a living example of the command surface.  The run is a
pure function of --seed.

Usage: python3 scripts/run_pipeline.py --out-dir runs/demo [--seed 0]
"""

from __future__ import annotations

import argparse
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from make_synthetic import _dump, make_corpus  # noqa: E402

from capenrich.cli import main as cli  # noqa: E402


def run(cmd: list[str]) -> None:
    print(f"$ capenrich {' '.join(cmd)}")
    rc = cli(cmd)
    if rc != 0:
        raise SystemExit(rc)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--n-images", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=30)
    args = ap.parse_args()

    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    p = lambda name: os.path.join(out, name)  # noqa: E731

    captions, splits = make_corpus(args.n_images, args.seed, "img")
    reservoir, _ = make_corpus(24, args.seed + 1, "res")
    _dump(captions, p("captions.json"))
    _dump(splits, p("splits.json"))
    _dump(reservoir, p("reservoir.json"))

    seed = str(args.seed)
    run(["build-data", "--captions", p("captions.json"), "--split", p("splits.json"),
         "--use-split", "train", "--out", p("samples_train.jsonl")])
    run(["build-data", "--captions", p("captions.json"), "--split", p("splits.json"),
         "--use-split", "val", "--out", p("samples_val.jsonl")])
    run(["gen-prompts", "--samples", p("samples_val.jsonl"), "--set", "diverse",
         "--out", p("prompt_strings.jsonl")])
    run(["make-embeddings", "--captions", p("captions.json"), "--dim", "64",
         "--seed", seed, "--out", p("images.emb1")])
    run(["make-embeddings", "--captions", p("reservoir.json"), "--dim", "64",
         "--seed", seed, "--out", p("reservoir.emb1")])
    # two stages: teach the backbone the caption layout in full mode first,
    # then freeze it and tune the prompt table that enrich will decode with
    run(["train", "--samples", p("samples_train.jsonl"), "--embeddings", p("images.emb1"),
         "--captions", p("captions.json"), "--split", p("splits.json"),
         "--mode", "full", "--lr", "3e-3",
         "--batch-size", "16", "--epochs", str(args.epochs), "--seed", seed,
         "--d-model", "32", "--n-heads", "4", "--n-layers", "2", "--d-ffn", "64",
         "--max-seq", "48", "--val-samples", p("samples_val.jsonl"),
         "--out", p("backbone.tlm1")])
    run(["train", "--samples", p("samples_train.jsonl"), "--embeddings", p("images.emb1"),
         "--ckpt-in", p("backbone.tlm1"),
         "--mode", "prompt_only", "--num-prompts", "2", "--lr", "3e-4",
         "--batch-size", "16", "--epochs", "60", "--seed", seed,
         "--val-samples", p("samples_val.jsonl"),
         "--out", p("model.tlm1")])
    run(["enrich", "--ckpt", p("model.tlm1"), "--embeddings", p("images.emb1"),
         "--samples", p("samples_val.jsonl"), "--beam", "5", "--max-new", "10",
         "--seed", seed, "--out", p("enriched.jsonl")])
    run(["build-hard-pool", "--target-embeddings", p("images.emb1"),
         "--reservoir-embeddings", p("reservoir.emb1"),
         "--captions", p("captions.json"), "--per-target", "8",
         "--seed", seed, "--out", p("hard_pool.json")])
    run(["eval", "--enriched", p("enriched.jsonl"), "--captions", p("captions.json"),
         "--split", p("splits.json"), "--embeddings", p("images.emb1"),
         "--pool", p("hard_pool.json"), "--seed", seed, "--out-json", p("report.json"),
         "--out-csv", p("report.csv"), "--svg", p("report.svg"),
         "--svg-dir", p("charts")])
    print(f"done -> {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

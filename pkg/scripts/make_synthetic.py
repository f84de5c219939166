#!/usr/bin/env python3
"""Generate a small synthetic caption corpus for pipeline runs.

Each image gets four captions built from fixed word pools: a two-token
generic, a predicative color statement, a verb+place sentence, and a
color+place noun phrase.  The detail miner finds attribute and relation
clauses in the last three.  Writes captions.json and splits.json, plus
a disjoint reservoir corpus (reservoir.json) for hard-pool curation.

Usage: python3 scripts/make_synthetic.py --out-dir runs/corpus [--n-images 40]
"""

from __future__ import annotations

import argparse
import json
import os
import random

OBJECTS = ["dog", "cat", "ball", "car", "boat", "bike", "bird", "horse", "chair", "lamp"]
COLORS = ["red", "blue", "green", "black", "white", "yellow"]
SIZES = ["big", "small", "tiny", "huge"]
PLACES = ["table", "grass", "beach", "road", "field", "floor"]
VERBS = ["sitting", "running", "standing", "resting", "playing", "walking"]


def image_captions(rng: random.Random) -> list[str]:
    obj = rng.choice(OBJECTS)
    color = rng.choice(COLORS)
    size = rng.choice(SIZES)
    place = rng.choice(PLACES)
    verb = rng.choice(VERBS)
    return [
        f"a {obj}",
        f"the {obj} is {color}",
        f"a {size} {obj} {verb} on the {place}",
        f"the {color} {obj} on the {place}",
    ]


def make_corpus(n_images: int, seed: int, prefix: str) -> tuple[dict, dict[str, str]]:
    rng = random.Random(seed)
    images, annotations = [], []
    splits: dict[str, str] = {}
    for i in range(n_images):
        iid = f"{prefix}{i:04d}"
        images.append({"id": iid})
        for cap in image_captions(rng):
            annotations.append({"image_id": iid, "caption": cap})
        # 3:1:1 train/val/test
        splits[iid] = ("train", "train", "train", "val", "test")[i % 5]
    return {"images": images, "annotations": annotations}, splits


def _dump(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--n-images", type=int, default=40)
    ap.add_argument("--reservoir", type=int, default=24)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    captions, splits = make_corpus(args.n_images, args.seed, "img")
    reservoir, _ = make_corpus(args.reservoir, args.seed + 1, "res")
    _dump(captions, os.path.join(args.out_dir, "captions.json"))
    _dump(splits, os.path.join(args.out_dir, "splits.json"))
    _dump(reservoir, os.path.join(args.out_dir, "reservoir.json"))
    print(f"{args.n_images} images + {args.reservoir} reservoir -> {args.out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

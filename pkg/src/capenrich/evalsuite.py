"""Evaluation metrics and retrieval pools.

Text overlap (BLEU-4, CIDEr-D), graph overlap (a lightweight tuple-F1
in the SPICE family), embedding similarity (CLIPScore lives in embed),
self-retrieval recall over naive and hard distractor pools, and the
diversity family (Div-n, mBLEU-4, Self-CIDEr).  Everything operates on
pre-tokenized captions and float64 vectors so results are exactly
reproducible.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import CaptionSet, tokenize
from .databuild import lemma
from .embed import EmbeddingTable, toy_text_embed
from .errors import InputError
from .sgparse import parse

_BLEU_EPS = 1e-9


# ---------------------------------------------------------------- n-grams

def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def _ngram_counts(tokens: list[str], max_n: int) -> dict[int, Counter]:
    return {n: Counter(_ngrams(tokens, n)) for n in range(1, max_n + 1)}


# ------------------------------------------------------------------ BLEU

def bleu4(candidate: list[str], references: list[list[str]]) -> float:
    """Corpus-free sentence BLEU with clipped modified precision.
    Zero precisions floor at 1e-9 instead of zeroing the whole score;
    brevity penalty uses the closest reference length, shorter on ties.
    """
    if not references:
        raise InputError("bleu4 needs at least one reference")
    c = len(candidate)
    if c == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        total = max(0, c - n + 1)
        cand_counts = Counter(_ngrams(candidate, n))
        clipped = 0
        for gram, count in cand_counts.items():
            best = max(Counter(_ngrams(r, n)).get(gram, 0) for r in references)
            clipped += min(count, best)
        p = clipped / total if total > 0 and clipped > 0 else _BLEU_EPS
        log_sum += math.log(p)
    geo = math.exp(log_sum / 4.0)
    r = min((len(ref) for ref in references), key=lambda rl: (abs(rl - c), rl))
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * geo


# --------------------------------------------------------------- CIDEr-D

@dataclass
class _CiderVec:
    # one tf-idf weighted bag per n-gram order, plus its L2 norm
    bags: dict[int, dict[tuple[str, ...], float]]
    norms: dict[int, float]
    length: int


def _cider_vec(tokens: list[str], max_n: int, idf) -> _CiderVec:
    bags: dict[int, dict[tuple[str, ...], float]] = {}
    norms: dict[int, float] = {}
    for n in range(1, max_n + 1):
        bag = {g: count * idf(g) for g, count in Counter(_ngrams(tokens, n)).items()}
        bags[n] = bag
        norms[n] = math.sqrt(sum(w * w for w in bag.values()))
    return _CiderVec(bags, norms, len(tokens))


def _cider_pair(cand: _CiderVec, ref: _CiderVec, max_n: int, sigma: float) -> float:
    delta = float(cand.length - ref.length)
    penalty = math.exp(-(delta**2) / (2.0 * sigma * sigma))
    acc = 0.0
    for n in range(1, max_n + 1):
        num = 0.0
        rbag = ref.bags[n]
        for g, w in cand.bags[n].items():
            rw = rbag.get(g, 0.0)
            if rw > 0.0:
                num += min(w, rw) * rw
        denom = cand.norms[n] * ref.norms[n]
        val = num / denom if denom > 0.0 else 0.0
        acc += val * penalty
    return acc / max_n


def cider_d(
    candidates: dict[str, list[str]],
    references: dict[str, list[list[str]]],
    *,
    max_n: int = 4,
    sigma: float = 6.0,
) -> tuple[dict[str, float], float]:
    """Consensus-based score.  Document frequency counts, per n-gram,
    how many images mention it anywhere in their reference set; idf is
    log(N) - log(max(1, df)).  Candidate term weights are clipped at
    the reference weight, cosine-normalized, Gaussian length penalty at
    every order, averaged over orders then references, scaled by 10.
    Returns (per-image scores, corpus mean)."""
    if set(candidates) != set(references):
        raise InputError("cider_d: candidate and reference image ids differ")
    if not candidates:
        raise InputError("cider_d: empty evaluation set")
    for iid, refs in references.items():
        if not refs:
            raise InputError(f"cider_d: image {iid!r} has no references")

    n_images = len(references)
    df: Counter = Counter()
    for refs in references.values():
        seen: set[tuple[str, ...]] = set()
        for ref in refs:
            for n in range(1, max_n + 1):
                seen.update(_ngrams(ref, n))
        df.update(seen)
    log_n = math.log(n_images)

    def idf(gram: tuple[str, ...]) -> float:
        return log_n - math.log(max(1.0, float(df.get(gram, 0))))

    per_image: dict[str, float] = {}
    for iid, cand in candidates.items():
        cvec = _cider_vec(cand, max_n, idf)
        sims = [_cider_pair(cvec, _cider_vec(ref, max_n, idf), max_n, sigma)
                for ref in references[iid]]
        per_image[iid] = 10.0 * sum(sims) / len(sims)
    mean = sum(per_image.values()) / len(per_image)
    return per_image, mean


# ------------------------------------------------------------ SPICE-lite

def graph_tuples(tokens: list[str]) -> set[tuple[str, ...]]:
    """Lemmatized proposition set of a caption: (head,) per entity,
    (head, modifier) per attribute, (subject, predicate, object) per
    relation.  Multi-word predicates are lemmatized word by word."""
    graph = parse(tokens)
    out: set[tuple[str, ...]] = set()
    for ent in graph.entities:
        head = lemma(ent.head)
        out.add((head,))
        for mod in ent.modifiers:
            out.add((head, lemma(mod)))
    for rel in graph.relations:
        pred = " ".join(lemma(w) for w in rel.predicate.split())
        out.add((lemma(rel.subject), pred, lemma(rel.obj)))
    return out


def spice_lite(candidate: list[str], references: list[list[str]]) -> float:
    """F1 between the candidate tuple set and the union of reference
    tuple sets.  Both sides empty scores 1, exactly one side empty 0."""
    if not references:
        raise InputError("spice_lite needs at least one reference")
    cand = graph_tuples(candidate)
    ref: set[tuple[str, ...]] = set()
    for r in references:
        ref |= graph_tuples(r)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    hit = len(cand & ref)
    p = hit / len(cand)
    r_ = hit / len(ref)
    return 0.0 if p + r_ == 0.0 else 2.0 * p * r_ / (p + r_)


# ------------------------------------------------------------- retrieval

@dataclass(frozen=True)
class RetrievalPool:
    kind: str                # "naive" or "hard"
    ids: list[str]
    vectors: np.ndarray      # (N, dim) float64 unit rows

    def __post_init__(self) -> None:
        if self.kind not in ("naive", "hard"):
            raise InputError(f"unknown pool kind {self.kind!r}")
        if len(self.ids) != self.vectors.shape[0]:
            raise InputError("pool ids and vectors disagree in length")
        if len(set(self.ids)) != len(self.ids):
            raise InputError("pool contains duplicate image ids")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def build_naive_pool(table: EmbeddingTable, ids: list[str]) -> RetrievalPool:
    """Pool = the listed images themselves, no curated distractors."""
    if len(set(ids)) != len(ids):
        raise InputError("naive pool: duplicate image ids in request")
    missing = [i for i in ids if i not in table]
    if missing:
        raise InputError(f"naive pool: no embedding for ids {missing}")
    vecs = np.stack([table.vec(i) for i in ids]) if ids else np.zeros((0, table.dim))
    return RetrievalPool("naive", list(ids), vecs)


def build_hard_pool(
    target_table: EmbeddingTable,
    reservoir_table: EmbeddingTable,
    caption_sets: dict[str, CaptionSet],
    *,
    per_target: int = 20,
    seed: int = 0,
) -> RetrievalPool:
    """Targets plus their nearest distractors from a disjoint reservoir.
    For every target we take the top per_target reservoir images by
    image-image cosine and, per reference caption, by text-image cosine,
    then union.  Targets keep their input order; distractors follow in
    sorted id order so the pool is deterministic."""
    if target_table.dim != reservoir_table.dim:
        raise InputError("hard pool: embedding dims differ between target and reservoir")
    overlap = sorted(set(target_table.ids) & set(reservoir_table.ids))
    if overlap:
        raise InputError(f"hard pool: reservoir shares ids with targets: {overlap}")
    if per_target < 1:
        raise InputError("hard pool: per_target must be >= 1")
    missing = [i for i in target_table.ids if i not in caption_sets]
    if missing:
        raise InputError(f"hard pool: no captions for target ids {missing}")

    res_ids = reservoir_table.ids
    res_vecs = reservoir_table.vectors
    k = min(per_target, len(res_ids))
    chosen: set[str] = set()

    def top_ids(query: np.ndarray) -> list[str]:
        scores = res_vecs @ query
        order = sorted(range(len(res_ids)), key=lambda j: (-scores[j], res_ids[j]))
        return [res_ids[j] for j in order[:k]]

    for tid in target_table.ids:
        chosen.update(top_ids(target_table.vec(tid)))
        for cap in caption_sets[tid].captions:
            q = toy_text_embed(tokenize(cap), dim=reservoir_table.dim, seed=seed)
            chosen.update(top_ids(q))

    ids = list(target_table.ids) + sorted(chosen)
    vecs = np.stack(
        [target_table.vec(i) for i in target_table.ids]
        + [reservoir_table.vec(i) for i in sorted(chosen)]
    )
    return RetrievalPool("hard", ids, vecs)


def save_pool(pool: RetrievalPool, path: str) -> None:
    obj = {
        "kind": pool.kind,
        "ids": pool.ids,
        "dim": pool.dim,
        "vectors": [[float(x) for x in row] for row in pool.vectors],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_pool(path: str) -> RetrievalPool:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed pool file") from exc
    try:
        kind = obj["kind"]
        ids = [str(i) for i in obj["ids"]]
        dim = int(obj["dim"])
        vectors = np.asarray(obj["vectors"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad pool file") from exc
    if vectors.ndim != 2 or vectors.shape != (len(ids), dim):
        raise InputError(f"{path}: pool vector shape mismatch")
    return RetrievalPool(kind, ids, vectors)


def rank_pool(query: np.ndarray, pool: RetrievalPool) -> list[str]:
    """Pool ids by descending cosine, id-ascending on exact ties."""
    norm = float(np.linalg.norm(query))
    if norm == 0.0:
        raise InputError("retrieval query has zero norm")
    scores = pool.vectors @ (query / norm)
    order = sorted(range(len(pool.ids)), key=lambda j: (-scores[j], pool.ids[j]))
    return [pool.ids[j] for j in order]


def recall_at_k(query: np.ndarray, true_id: str, pool: RetrievalPool,
                ks: tuple[int, ...] = (1, 5, 10)) -> dict[int, bool]:
    if true_id not in pool.ids:
        raise InputError(f"retrieval: true id {true_id!r} missing from pool")
    ranked = rank_pool(query, pool)
    rank = ranked.index(true_id)
    return {k: rank < k for k in ks}


def mean_recall(
    queries: list[tuple[np.ndarray, str]],
    pool: RetrievalPool,
    ks: tuple[int, ...] = (1, 5, 10),
) -> dict[int, float]:
    if not queries:
        raise InputError("retrieval: no queries given")
    hits = {k: 0 for k in ks}
    for vec, true_id in queries:
        got = recall_at_k(vec, true_id, pool, ks)
        for k in ks:
            hits[k] += int(got[k])
    return {k: hits[k] / len(queries) for k in ks}


# ------------------------------------------------------------- diversity

def div_n(captions: list[list[str]], n: int) -> float:
    """Distinct n-grams over total n-grams across the caption set."""
    if n < 1:
        raise InputError("div_n: n must be >= 1")
    grams: list[tuple[str, ...]] = []
    for cap in captions:
        grams.extend(_ngrams(cap, n))
    if not grams:
        warnings.warn(f"div_n: no {n}-grams in caption set, returning 0", stacklevel=2)
        return 0.0
    return len(set(grams)) / len(grams)


def mbleu4(captions: list[list[str]]) -> float:
    """Mean BLEU-4 of each caption against the others.  High values
    mean the set repeats itself."""
    if len(captions) < 2:
        raise InputError("mbleu4 needs at least 2 captions")
    scores = [
        bleu4(cap, captions[:i] + captions[i + 1 :]) for i, cap in enumerate(captions)
    ]
    return sum(scores) / len(scores)


def self_cider(captions: list[list[str]]) -> float:
    """Spectral diversity of the pairwise consensus kernel.  Uniform
    idf (no corpus statistics), symmetrized, ratio of the dominant
    singular value against the trace, mapped through -log r / log k.
    Identical sets score 0, pairwise disjoint sets score 1."""
    k = len(captions)
    if k < 2:
        raise InputError("self_cider needs at least 2 captions")
    vecs = [_cider_vec(cap, 4, lambda g: 1.0) for cap in captions]
    kern = np.zeros((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            kern[i, j] = _cider_pair(vecs[i], vecs[j], 4, 6.0)
    kern = (kern + kern.T) / 2.0
    eig = np.linalg.eigvalsh(kern)
    roots = np.sqrt(np.clip(eig, 0.0, None))
    total = float(roots.sum())
    if total == 0.0:
        warnings.warn("self_cider: degenerate kernel, returning 0", stacklevel=2)
        return 0.0
    ratio = float(roots[-1]) / total
    return -math.log(ratio) / math.log(k)


# --------------------------------------------------------------- reports

@dataclass
class MetricReport:
    scalars: dict[str, float] = field(default_factory=dict)
    per_image: dict[str, dict[str, float]] = field(default_factory=dict)

    def add(self, name: str, value: float) -> None:
        self.scalars[name] = float(value)


def write_report_json(report: MetricReport, path: str) -> None:
    obj = {"scalars": report.scalars, "per_image": report.per_image}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_report_csv(report: MetricReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for name in sorted(report.scalars):
            writer.writerow([name, repr(report.scalars[name])])

"""Post-generation filtering.

A decoded detail clause only survives if it is structurally complete
and makes the enriched caption measurably closer to the image than the
generic caption alone (strict inequality, so a detail that adds no
signal is dropped).  When nothing survives the caller falls back to
the unmodified generic caption.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import SPECIALS, detokenize, tokenize
from .embed import sim, toy_text_embed
from .errors import InputError
from .sgparse import is_structurally_complete


@dataclass(frozen=True)
class Survivor:
    index: int          # position in the candidate list handed in
    detail: str
    enriched: str
    score: float        # cosine between enriched caption and image


def render_enriched(generic: str, detail: str) -> str:
    return f"{generic}, {detail}"


def filter_candidates(
    generic: str,
    details: list[str],
    image_vec: np.ndarray,
    *,
    seed: int = 0,
) -> list[Survivor]:
    """Keep candidates that parse as complete clauses and strictly raise
    image similarity over the generic caption."""
    if not generic.strip():
        raise InputError("generic caption is empty")
    dim = int(image_vec.shape[0])
    base = sim(toy_text_embed(tokenize(generic), dim=dim, seed=seed), image_vec)
    out: list[Survivor] = []
    for i, detail in enumerate(details):
        toks = tokenize(detail)
        if not toks or not is_structurally_complete(toks):
            continue
        enriched = render_enriched(generic, detail)
        score = sim(toy_text_embed(tokenize(enriched), dim=dim, seed=seed), image_vec)
        if score > base:
            out.append(Survivor(index=i, detail=detail, enriched=enriched, score=score))
    return out


def select_best(survivors: list[Survivor]) -> Survivor | None:
    """Highest similarity wins; ties prefer the shorter detail, then
    lexicographic order, so selection is deterministic."""
    if not survivors:
        return None
    return min(survivors, key=lambda s: (-s.score, len(tokenize(s.detail)), s.detail))


@dataclass(frozen=True)
class EnrichedRecord:
    image_id: str
    generic: str
    enriched: str
    source: str      # "prompt:<name>", "template:<name>" or "fallback"
    sim_gain: float


def fallback_record(image_id: str, generic: str) -> EnrichedRecord:
    return EnrichedRecord(image_id, generic, generic, "fallback", 0.0)


def write_enriched(records: list[EnrichedRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "image_id": r.image_id,
                "generic": r.generic,
                "enriched": r.enriched,
                "source": r.source,
                "sim_gain": r.sim_gain,
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_enriched(path: str) -> list[EnrichedRecord]:
    records: list[EnrichedRecord] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: malformed JSON line") from exc
            try:
                records.append(
                    EnrichedRecord(
                        image_id=str(obj["image_id"]),
                        generic=str(obj["generic"]),
                        enriched=str(obj["enriched"]),
                        source=str(obj["source"]),
                        sim_gain=float(obj["sim_gain"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path}:{lineno}: bad enriched record") from exc
    return records


def decode_tokens_to_detail(tokens: list[str]) -> str:
    """Detail clause from decoded tokens: drop reserved special tokens
    (a weak model can emit them mid-span), join, then normalize spacing
    around breaking punctuation the tokenizer split off."""
    text = detokenize([t for t in tokens if t not in SPECIALS])
    for ch in ",.!?;:":
        text = text.replace(f" {ch}", ch)
    return text.strip()

"""Automatic construction of enrichment training samples.

For each image with at least two reference captions: the caption with
the fewest tokens is the generic base; the remaining captions are
parsed into shallow scene graphs; attribute and relation tuples are
rendered into clause templates and kept only when they mention
something the generic base does not already cover (lemma subsumption).
Surviving clauses are grouped by kind so attribute-flavored and
relation-flavored samples can be trained separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import CaptionSet, TokenSeq, tokenize
from .errors import InputError
from .sgparse import SceneGraph, parse

ATTR, REL, MIXED = "ATTR", "REL", "MIXED"
KINDS = (ATTR, REL, MIXED)


@dataclass
class DetailCandidate:
    kind: str
    text: str
    content_lemmas: frozenset[str]
    source_index: int = 0


@dataclass
class EnrichSample:
    """One training record: a generic base plus detail clauses of one kind."""

    image_id: str
    generic: str
    details: list[str]
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"bad sample kind {self.kind!r}")
        if not self.details:
            raise InputError(f"image {self.image_id!r}: sample has no details")


def select_generic(captions: list[str]) -> str:
    """The caption with the fewest tokens; ties break to the
    lexicographically smallest raw string."""
    if not captions:
        raise InputError("select_generic: empty caption list")
    return min(captions, key=lambda c: (len(tokenize(c)), c))


def lemma(token: str) -> str:
    """Crude suffix stemming: -ing (length > 5), plural -es/-s (length > 3).

    No doubled-consonant restoration is attempted ("running" -> "runn").
    """
    if token.endswith("ing") and len(token) > 5:
        return token[:-3]
    if len(token) > 3:
        if token.endswith("es") and token[-3] in "sxzh":
            return token[:-2]
        if token.endswith("s") and not token.endswith("ss"):
            return token[:-1]
    return token


def _lemmas(seq: TokenSeq) -> set[str]:
    return {lemma(t) for t in seq}


def extract_candidates(graph: SceneGraph) -> list[DetailCandidate]:
    """Render attribute and relation tuples into clause candidates.

    Attributes come first (entity order, modifier order), then relations
    in parse order.  content_lemmas collects the lemmas of the tuple's
    content words and drives the novelty filter downstream.
    """
    out: list[DetailCandidate] = []
    for ent in graph.entities:
        for mod in ent.modifiers:
            out.append(
                DetailCandidate(
                    kind=ATTR,
                    text=f"the {ent.head} is {mod}",
                    content_lemmas=frozenset({lemma(ent.head), lemma(mod)}),
                )
            )
    for rel in graph.relations:
        words = [rel.subject, *rel.predicate.split(), rel.obj]
        out.append(
            DetailCandidate(
                kind=REL,
                text=f"the {rel.subject} {rel.predicate} the {rel.obj}",
                content_lemmas=frozenset(lemma(w) for w in words),
            )
        )
    return out


def build_samples(caption_set: CaptionSet, max_details: int = 3) -> list[EnrichSample]:
    """Build per-kind enrichment samples for one image.

    Images with fewer than two captions yield no samples.  Candidates
    are mined from every caption except the selected generic one,
    filtered for novelty (a candidate whose content lemmas are all
    already in the generic caption is dropped), deduplicated by lemma
    set (first wins), ordered by (source caption index, extraction
    order), and truncated to max_details per kind.
    """
    if max_details < 1:
        raise InputError(f"max_details must be >= 1, got {max_details}")
    caps = caption_set.captions
    if len(caps) < 2:
        return []
    generic = select_generic(caps)
    generic_lemmas = _lemmas(tokenize(generic))
    skip_index = caps.index(generic)

    candidates: list[DetailCandidate] = []
    for i, cap in enumerate(caps):
        if i == skip_index:
            continue
        for cand in extract_candidates(parse(tokenize(cap))):
            cand.source_index = i
            candidates.append(cand)

    seen: set[frozenset[str]] = set()
    by_kind: dict[str, list[DetailCandidate]] = {ATTR: [], REL: []}
    for cand in candidates:
        if cand.content_lemmas <= generic_lemmas:
            continue
        if cand.content_lemmas in seen:
            continue
        seen.add(cand.content_lemmas)
        by_kind[cand.kind].append(cand)

    samples = []
    for kind in (ATTR, REL):
        kept = by_kind[kind][:max_details]
        if kept:
            samples.append(
                EnrichSample(
                    image_id=caption_set.image_id,
                    generic=generic,
                    details=[c.text for c in kept],
                    kind=kind,
                )
            )
    return samples


def render_target(sample: EnrichSample) -> str:
    """Join the generic base and its detail clauses with comma-space."""
    if not sample.details:
        raise InputError(f"image {sample.image_id!r}: cannot render empty details")
    return ", ".join([sample.generic, *sample.details])


# ---------------------------------------------------------------------------
# sample file format: one JSON object per line


def write_samples(samples: list[EnrichSample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {
                "image_id": s.image_id,
                "generic": s.generic,
                "details": s.details,
                "kind": s.kind,
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_samples(path: str) -> list[EnrichSample]:
    samples = []
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
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: malformed JSON on line {lineno}") from exc
            try:
                samples.append(
                    EnrichSample(
                        image_id=str(rec["image_id"]),
                        generic=rec["generic"],
                        details=list(rec["details"]),
                        kind=rec["kind"],
                    )
                )
            except (KeyError, TypeError) as exc:
                raise InputError(f"{path}: bad sample record on line {lineno}") from exc
    return samples

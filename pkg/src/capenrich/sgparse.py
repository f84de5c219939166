"""Rule-based shallow scene-graph parsing for captions.

The tagger is a cascade of closed-class lexicons and suffix heuristics;
the chunker matches maximal (DET)? (NUM|ADJ)* (NOUN)+ spans; relations
come from short tag patterns between adjacent entity chunks.  This is a
deliberately small grammar: deterministic, fast, and good enough to
mine attribute and relation clauses from reference captions.

Tag inventory: DET, ADJ, NOUN, VERB, PREP, CONJ, COP, PRON, NUM,
PUNCT, OTHER.

Tagging order per token:
  1. punctuation            -> PUNCT
  2. determiner lexicon     -> DET
  3. preposition lexicon    -> PREP
  4. copula lexicon         -> COP
  5. conjunction lexicon    -> CONJ
  6. pronoun lexicon        -> PRON
  7. numeral lexicon/digits -> NUM
  8. adjective lexicon      -> ADJ
  9. verb lexicon, -ing/-ed suffixes (with noun exemptions) -> VERB
 10. -ly suffix             -> OTHER (adverbs)
 11. -y/-ful/-ous/-ive      -> ADJ
 12. default                -> NOUN
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .corpus import TokenSeq

DET, ADJ, NOUN, VERB, PREP, CONJ, COP, PRON, NUM, PUNCT, OTHER = (
    "DET", "ADJ", "NOUN", "VERB", "PREP", "CONJ", "COP", "PRON", "NUM", "PUNCT", "OTHER",
)

# Tags that cannot legally end a complete clause.  A trailing ADJ is
# special-cased: predicative position ("the shirt is red") is complete,
# a dangling premodifier ("the tall") is not.
_BAD_ENDINGS = frozenset({DET, PREP, CONJ, COP})


@lru_cache(maxsize=None)
def _lexicon(name: str) -> frozenset[str]:
    text = (resources.files("capenrich") / "lexicons" / f"{name}.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


@dataclass
class Entity:
    """A noun chunk: last noun is the head, ADJ tokens are modifiers."""

    head: str
    modifiers: list[str] = field(default_factory=list)
    span: tuple[int, int] = (0, 0)

    def add_modifier(self, token: str) -> None:
        if token not in self.modifiers:
            self.modifiers.append(token)


@dataclass(frozen=True)
class Relation:
    subject: str
    predicate: str
    obj: str


@dataclass
class SceneGraph:
    entities: list[Entity] = field(default_factory=list)
    relations: list[Relation] = field(default_factory=list)


def _is_punct(token: str) -> bool:
    return not any(ch.isalnum() for ch in token)


def pos_tag(seq: TokenSeq) -> list[str]:
    """Assign one tag per token via the lexicon/suffix cascade."""
    tags = []
    for tok in seq:
        if _is_punct(tok):
            tags.append(PUNCT)
        elif tok in _lexicon("determiners"):
            tags.append(DET)
        elif tok in _lexicon("prepositions"):
            tags.append(PREP)
        elif tok in _lexicon("copulas"):
            tags.append(COP)
        elif tok in _lexicon("conjunctions"):
            tags.append(CONJ)
        elif tok in _lexicon("pronouns"):
            tags.append(PRON)
        elif tok in _lexicon("numerals") or tok.isdigit():
            tags.append(NUM)
        elif tok in _lexicon("adjectives"):
            tags.append(ADJ)
        elif tok in _lexicon("verbs"):
            tags.append(VERB)
        elif tok.endswith("ing") and len(tok) >= 5 and tok not in _lexicon("ing_nouns"):
            tags.append(VERB)
        elif tok.endswith("ed") and len(tok) >= 5:
            tags.append(VERB)
        elif tok.endswith("ly") and len(tok) >= 5:
            tags.append(OTHER)
        elif len(tok) >= 4 and (
            tok.endswith("y") or tok.endswith("ful") or tok.endswith("ous") or tok.endswith("ive")
        ):
            tags.append(ADJ)
        else:
            tags.append(NOUN)
    return tags


def chunk_entities(seq: TokenSeq, tags: list[str]) -> list[Entity]:
    """Greedy left-to-right maximal matches of (DET)? (NUM|ADJ)* (NOUN)+."""
    if len(seq) != len(tags):
        raise ValueError("seq and tags must have equal length")
    entities: list[Entity] = []
    i, n = 0, len(seq)
    while i < n:
        j = i
        if j < n and tags[j] == DET:
            j += 1
        k = j
        while k < n and tags[k] in (NUM, ADJ):
            k += 1
        m = k
        while m < n and tags[m] == NOUN:
            m += 1
        if m > k:
            ent = Entity(head=seq[m - 1], span=(i, m))
            for t in range(i, k):
                if tags[t] == ADJ:
                    ent.add_modifier(seq[t])
            entities.append(ent)
            i = m
        else:
            i += 1
    return entities


def _match_predicate(words: list[str], tags: list[str]) -> str | None:
    """Match a relation gap: optional copula, then VERB, VERB PREP, or PREP.

    The leading copula acts as an auxiliary ("is riding") and does not
    appear in the predicate.  Longer gaps do not match, which caps
    predicates at verb plus one preposition.
    """
    if tags and tags[0] == COP and len(tags) > 1:
        words, tags = words[1:], tags[1:]
    if tags == [VERB]:
        return words[0]
    if tags == [VERB, PREP]:
        return f"{words[0]} {words[1]}"
    if tags == [PREP]:
        return words[0]
    return None


def parse(seq: TokenSeq) -> SceneGraph:
    """Entities via chunking, relations and copular attributes via gap patterns.

    Between adjacent entities: E1 VERB E2, E1 VERB PREP E2, and
    E1 PREP E2 yield relations (an auxiliary copula before the verb is
    skipped).  After any entity, COP ADJ+ folds the adjectives into that
    entity's modifiers; a relation pattern may still follow in the same
    gap ("the shirt is red on the table").
    """
    tags = pos_tag(seq)
    entities = chunk_entities(seq, tags)
    relations: list[Relation] = []
    for idx, ent in enumerate(entities):
        gap_start = ent.span[1]
        gap_end = entities[idx + 1].span[0] if idx + 1 < len(entities) else len(seq)
        pos = gap_start
        if pos < gap_end and tags[pos] == COP:
            j = pos + 1
            adjs = []
            while j < gap_end and tags[j] == ADJ:
                adjs.append(seq[j])
                j += 1
            if adjs:
                for a in adjs:
                    ent.add_modifier(a)
                pos = j
        if idx + 1 < len(entities):
            pred = _match_predicate(list(seq[pos:gap_end]), tags[pos:gap_end])
            if pred is not None:
                relations.append(Relation(ent.head, pred, entities[idx + 1].head))
    return SceneGraph(entities=entities, relations=relations)


def is_structurally_complete(seq: TokenSeq) -> bool:
    """True iff the sequence has a noun and does not trail off mid-phrase.

    Trailing punctuation is ignored.  Sequences ending in DET, PREP,
    CONJ, or COP are incomplete ("the color of the"); so is a trailing
    attributive ADJ ("the tall"), but a predicative adjective right
    after a copula ("the shirt is red") counts as complete.
    """
    tags = pos_tag(seq)
    end = len(tags)
    while end > 0 and tags[end - 1] == PUNCT:
        end -= 1
    if end == 0 or NOUN not in tags[:end]:
        return False
    last = tags[end - 1]
    if last in _BAD_ENDINGS:
        return False
    if last == ADJ and (end < 2 or tags[end - 2] != COP):
        return False
    return True

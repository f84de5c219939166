"""Hand-written prompt templates and their instantiation.

Two builtin sets: "base" holds the single template "the X"; "diverse"
holds ten templates covering attributes, counts, orientation, weather,
and generic existential leads.  A template pattern may contain the
placeholder X, filled once per distinct entity head of the generic
caption; the wears template instead carries a man/woman alternation
that is filled with the first person-denoting head, and is emitted only
when such a head is present.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .corpus import tokenize
from .errors import InputError
from .sgparse import parse

BASE, ATTRIBUTE, NUMBER, ORIENTATION, WEATHER, OTHER = (
    "BASE", "ATTRIBUTE", "NUMBER", "ORIENTATION", "WEATHER", "OTHER",
)
CATEGORIES = (BASE, ATTRIBUTE, NUMBER, ORIENTATION, WEATHER, OTHER)

# Heads that satisfy the person gate of the wears template.
PERSON_HEADS = frozenset({"man", "woman", "boy", "girl", "person", "people"})

_PERSON_SLOT = "man/woman"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    pattern: str
    category: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise InputError(f"template {self.name!r}: bad category {self.category!r}")
        if not self.name:
            raise InputError("template name must be non-empty")


_BASE = (PromptTemplate("base", "the X", BASE),)

_DIVERSE = (
    PromptTemplate("wears", f"the {_PERSON_SLOT} wears", ATTRIBUTE),
    PromptTemplate("color", "the color of X is", ATTRIBUTE),
    PromptTemplate("number", "the number of X is", NUMBER),
    PromptTemplate("right-of", "on the right of X", ORIENTATION),
    PromptTemplate("left-of", "on the left of X", ORIENTATION),
    PromptTemplate("top-of", "on the top of X", ORIENTATION),
    PromptTemplate("weather", "the weather is", WEATHER),
    PromptTemplate("it-is", "it is", OTHER),
    PromptTemplate("there-is", "there is", OTHER),
    PromptTemplate("there-are", "there are", OTHER),
)


def builtin_templates(set_name: str) -> list[PromptTemplate]:
    """"base" -> 1 template, "diverse" -> 10 templates."""
    if set_name == "base":
        return list(_BASE)
    if set_name == "diverse":
        return list(_DIVERSE)
    raise InputError(f"unknown template set {set_name!r} (expected 'base' or 'diverse')")


def _entity_heads(generic: str) -> list[str]:
    """Distinct entity heads of the generic caption, in appearance order."""
    heads: list[str] = []
    for ent in parse(tokenize(generic)).entities:
        if ent.head not in heads:
            heads.append(ent.head)
    return heads


def _fill(pattern: str, value: str) -> str:
    return " ".join(value if w == "X" else w for w in pattern.split())


def instantiate(template: PromptTemplate, generic: str) -> list[str]:
    """Emit "{generic}, {filled pattern}" strings for one template.

    X-bearing patterns produce one string per distinct entity head of
    the generic caption (none -> empty result).  The man/woman slot is
    filled with the first person head and gated on its presence.
    Placeholder-free patterns are emitted once.  Results never repeat.
    """
    if not generic.strip():
        raise InputError("instantiate: empty generic caption")
    pattern = template.pattern
    if _PERSON_SLOT in pattern.split():
        person = next((h for h in _entity_heads(generic) if h in PERSON_HEADS), None)
        if person is None:
            return []
        filled = [" ".join(person if w == _PERSON_SLOT else w for w in pattern.split())]
    elif "X" in pattern.split():
        filled = [_fill(pattern, head) for head in _entity_heads(generic)]
    else:
        filled = [pattern]
    out: list[str] = []
    for f in filled:
        line = f"{generic}, {f}"
        if line not in out:
            out.append(line)
    return out


def load_templates(path: str) -> list[PromptTemplate]:
    """Read a user template file: a JSON list of name/pattern/category objects."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputError(
            f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}"
        ) from exc
    if not isinstance(data, list):
        raise InputError(f"{path}: expected a JSON list of templates")
    templates = []
    names = set()
    for i, rec in enumerate(data):
        if not isinstance(rec, dict) or not {"name", "pattern", "category"} <= rec.keys():
            raise InputError(f"{path}: templates[{i}] needs name, pattern, category")
        if rec["name"] in names:
            raise InputError(f"{path}: duplicate template name {rec['name']!r}")
        names.add(rec["name"])
        templates.append(PromptTemplate(rec["name"], rec["pattern"], rec["category"]))
    return templates

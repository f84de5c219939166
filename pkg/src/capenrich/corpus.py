"""Caption corpus loading, tokenization, and vocabulary.

A corpus is a list of CaptionSet records: one image id with all of its
reference captions and a train/val/test split assignment.  Tokenization
is deliberately simple and deterministic; the vocabulary is built from
the train split only, with five reserved special tokens at fixed ids.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .errors import InputError

# Type alias used across the package: a list of lowercase tokens.
TokenSeq = list[str]

SPLITS = ("train", "val", "test")

# Special tokens occupy fixed ids 0..4 in every vocabulary.
PAD, BOS, EOS, SEP, MASK = "[PAD]", "[BOS]", "[EOS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, BOS, EOS, SEP, MASK)
PAD_ID, BOS_ID, EOS_ID, SEP_ID, MASK_ID = range(5)

# These six characters always become standalone tokens.
_BREAKING = frozenset(",.!?;:")


@dataclass
class CaptionSet:
    """One image with its reference captions and split assignment."""

    image_id: str
    captions: list[str]
    split: str = "train"

    def __post_init__(self):
        if not self.captions:
            raise InputError(f"image {self.image_id!r}: captions must be non-empty")
        for c in self.captions:
            if not isinstance(c, str) or not c.strip():
                raise InputError(f"image {self.image_id!r}: blank or non-string caption")
        if self.split not in SPLITS:
            raise InputError(f"image {self.image_id!r}: bad split {self.split!r}")


def tokenize(text: str) -> TokenSeq:
    """Lowercase and split a caption into tokens.

    Whitespace separates candidate tokens; each of , . ! ? ; : becomes
    its own token wherever it occurs; any other punctuation is stripped
    from token edges only, so interior apostrophes and hyphens survive
    ("it's RED-ish" -> ["it's", "red-ish"]).
    """
    out: TokenSeq = []
    for chunk in text.lower().split():
        pieces: list[str] = []
        buf = []
        for ch in chunk:
            if ch in _BREAKING:
                if buf:
                    pieces.append("".join(buf))
                    buf = []
                pieces.append(ch)
            else:
                buf.append(ch)
        if buf:
            pieces.append("".join(buf))
        for piece in pieces:
            if piece in _BREAKING:
                out.append(piece)
                continue
            start, end = 0, len(piece)
            while start < end and not piece[start].isalnum():
                start += 1
            while end > start and not piece[end - 1].isalnum():
                end -= 1
            if start < end:
                out.append(piece[start:end])
    return out


def detokenize(tokens: TokenSeq) -> str:
    """Join tokens with single spaces (inverse of tokenize up to spacing)."""
    return " ".join(tokens)


@dataclass
class Vocab:
    """Token <-> id table with reserved specials at ids 0..4.

    Non-special entries are ordered by descending train-split frequency,
    ties broken lexicographically.  Unknown tokens encode to MASK.
    """

    tokens: list[str]
    _ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:5]) != SPECIALS:
            raise InputError("vocab must start with the five special tokens")
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise InputError("vocab contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        """Id for a token; unknown tokens map to MASK_ID."""
        return self._ids.get(token, MASK_ID)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise InputError(f"token id {idx} out of range (vocab size {len(self.tokens)})")
        return self.tokens[idx]

    def encode(self, seq: TokenSeq) -> list[int]:
        return [self.id_of(t) for t in seq]

    def decode(self, ids: list[int]) -> TokenSeq:
        return [self.token_of(i) for i in ids]


def build_vocab(corpus: list[CaptionSet], min_count: int = 1) -> Vocab:
    """Count tokens over the train split and assign ids.

    Tokens with frequency < min_count are excluded (they will encode to
    MASK).  An empty train split is an error.
    """
    if min_count < 1:
        raise InputError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    seen_train = False
    for cs in corpus:
        if cs.split != "train":
            continue
        seen_train = True
        for caption in cs.captions:
            counts.update(tokenize(caption))
    if not seen_train:
        raise InputError("cannot build vocab: corpus has no train-split images")
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocab(list(SPECIALS) + kept)


# ---------------------------------------------------------------------------
# file loading


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputError(
            f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}"
        ) from exc


def load_corpus(captions_path: str, split_path: str | None = None) -> list[CaptionSet]:
    """Load grouped captions plus an optional split-assignment file.

    The captions file follows the usual two-table layout: an "images"
    list with unique ids and an "annotations" list whose entries each
    carry an image_id and a caption string.  Ids are canonicalized to
    strings.  The split file maps image id -> "train"|"val"|"test";
    images it does not mention default to "train".  Images with no
    annotations are dropped.

    Raises InputError for malformed files, duplicate image ids, or an
    annotation that references an unknown image id.
    """
    data = _load_json(captions_path)
    if not isinstance(data, dict) or "images" not in data or "annotations" not in data:
        raise InputError(f"{captions_path}: expected object with 'images' and 'annotations'")

    order: list[str] = []
    grouped: dict[str, list[str]] = {}
    for i, img in enumerate(data["images"]):
        if not isinstance(img, dict) or "id" not in img:
            raise InputError(f"{captions_path}: images[{i}] has no 'id'")
        iid = str(img["id"])
        if iid in grouped:
            raise InputError(f"{captions_path}: duplicate image id {iid!r}")
        grouped[iid] = []
        order.append(iid)

    for i, ann in enumerate(data["annotations"]):
        if not isinstance(ann, dict) or "image_id" not in ann or "caption" not in ann:
            raise InputError(f"{captions_path}: annotations[{i}] needs 'image_id' and 'caption'")
        iid = str(ann["image_id"])
        if iid not in grouped:
            raise InputError(
                f"{captions_path}: annotations[{i}] references unknown image id {iid!r}"
            )
        cap = ann["caption"]
        if not isinstance(cap, str) or not cap.strip():
            raise InputError(f"{captions_path}: annotations[{i}] has a blank caption")
        grouped[iid].append(cap)

    splits: dict[str, str] = {}
    if split_path is not None:
        raw = _load_json(split_path)
        if not isinstance(raw, dict):
            raise InputError(f"{split_path}: expected an object mapping image id to split")
        for key, val in raw.items():
            if val not in SPLITS:
                raise InputError(f"{split_path}: bad split {val!r} for image {key!r}")
            splits[str(key)] = val

    return [
        CaptionSet(iid, grouped[iid], splits.get(iid, "train"))
        for iid in order
        if grouped[iid]
    ]

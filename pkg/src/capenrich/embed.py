"""Deterministic toy embedding space plus the EMB1 vector file format.

Tokens map to pseudo-random Gaussian vectors through a seeded hash, so
any two processes with the same seed agree exactly.  A text embedding
is the L2-normalized sum of its token vectors; an image embedding is
the normalized mean of its reference-caption embeddings.  Pure
punctuation tokens carry no signal and are skipped, which keeps a
caption's direction unchanged when its own words are merely repeated.

EMB1 layout (little endian): magic "EMB1", u32 record count, u32 dim,
then per record a u16 id byte length, the UTF-8 id, and dim float32
components.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import CaptionSet, TokenSeq, tokenize
from .errors import InputError, NumericError

_MAGIC = b"EMB1"

# token -> vector cache, keyed by (seed, dim, token)
_TOKEN_CACHE: dict[tuple[int, int, str], np.ndarray] = {}


@dataclass
class EmbeddingTable:
    """Ordered id -> unit-vector table."""

    ids: list[str]
    vectors: np.ndarray  # (N, dim) float64, rows unit norm
    duplicate_count: int = 0
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.ids) != self.vectors.shape[0]:
            raise InputError("EmbeddingTable: ids and vectors disagree on count")
        self._index = {i: k for k, i in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise InputError("EmbeddingTable: duplicate ids")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._index

    def vec(self, image_id: str) -> np.ndarray:
        try:
            return self.vectors[self._index[image_id]]
        except KeyError as exc:
            raise InputError(f"embedding table has no id {image_id!r}") from exc


def _normalize(v: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm < 1e-12 or not np.isfinite(norm):
        raise NumericError(f"{what}: cannot normalize zero or non-finite vector")
    return v / norm


def load_embeddings(path: str) -> EmbeddingTable:
    """Read an EMB1 file.  Duplicate ids keep the last record and are
    counted in table.duplicate_count; zero vectors are an error."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    if len(blob) < 12 or blob[:4] != _MAGIC:
        raise InputError(f"{path}: not an EMB1 file (bad magic or truncated header)")
    count, dim = struct.unpack_from("<II", blob, 4)
    if dim < 1:
        raise InputError(f"{path}: bad dimension {dim}")
    off = 12
    order: list[str] = []
    latest: dict[str, np.ndarray] = {}
    dupes = 0
    for r in range(count):
        if off + 2 > len(blob):
            raise InputError(f"{path}: truncated at record {r}")
        (id_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        if off + id_len + 4 * dim > len(blob):
            raise InputError(f"{path}: truncated at record {r}")
        image_id = blob[off : off + id_len].decode("utf-8")
        off += id_len
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=off).astype(np.float64)
        off += 4 * dim
        if float(np.linalg.norm(vec)) < 1e-12:
            raise InputError(f"{path}: zero vector for id {image_id!r}")
        if image_id in latest:
            dupes += 1
        else:
            order.append(image_id)
        latest[image_id] = _normalize(vec, f"record {image_id!r}")
    if off != len(blob):
        raise InputError(f"{path}: {len(blob) - off} trailing bytes after {count} records")
    vectors = (
        np.stack([latest[i] for i in order])
        if order
        else np.zeros((0, dim), dtype=np.float64)
    )
    return EmbeddingTable(order, vectors, duplicate_count=dupes)


def save_embeddings(table: EmbeddingTable, path: str) -> None:
    parts = [_MAGIC, struct.pack("<II", len(table.ids), table.dim)]
    for image_id, vec in zip(table.ids, table.vectors):
        raw = image_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise InputError(f"id too long to store: {image_id!r}")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(vec.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


# ---------------------------------------------------------------------------
# toy embedding space


def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    key = (seed, dim, token)
    cached = _TOKEN_CACHE.get(key)
    if cached is None:
        digest = hashlib.sha256(f"{seed}\x00{token}".encode("utf-8")).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
        cached = rng.standard_normal(dim)
        _TOKEN_CACHE[key] = cached
    return cached


def toy_text_embed(seq: TokenSeq, dim: int = 256, seed: int = 0) -> np.ndarray:
    """Normalized count-weighted sum of per-token hash vectors
    (punctuation skipped).

    Accumulation runs over distinct tokens in first-appearance order,
    so doubling every token count scales each term and partial sum by
    exactly two and the normalized result is bit-identical; the
    enrichment filter relies on that to reject echoed captions.  A
    sequence with no contributing tokens maps to the first basis
    vector, so every input has a well-defined unit embedding.
    """
    if dim < 8:
        raise InputError(f"embedding dim must be >= 8, got {dim}")
    counts: dict[str, int] = {}
    for tok in seq:
        if not any(ch.isalnum() for ch in tok):
            continue
        counts[tok] = counts.get(tok, 0) + 1
    if not counts:
        basis = np.zeros(dim, dtype=np.float64)
        basis[0] = 1.0
        return basis
    total = np.zeros(dim, dtype=np.float64)
    for tok, count in counts.items():
        total += count * _token_vector(tok, dim, seed)
    return _normalize(total, "toy_text_embed")


def toy_image_embed(caption_set: CaptionSet, dim: int = 256, seed: int = 0) -> np.ndarray:
    """Normalized mean of the reference captions' text embeddings."""
    if not caption_set.captions:
        raise InputError(f"image {caption_set.image_id!r}: no captions to embed")
    acc = np.zeros(dim, dtype=np.float64)
    for cap in caption_set.captions:
        acc += toy_text_embed(tokenize(cap), dim, seed)
    return _normalize(acc / len(caption_set.captions), f"image {caption_set.image_id!r}")


# ---------------------------------------------------------------------------
# similarity scores


def sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; errors on dimension mismatch or zero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"sim: shape mismatch {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na < 1e-12 or nb < 1e-12:
        raise NumericError("sim: zero vector")
    return float(np.dot(a, b) / (na * nb))


def clip_score(image_vec: np.ndarray, text_vec: np.ndarray) -> float:
    """2.5 * max(cosine, 0); range [0, 2.5]."""
    return 2.5 * max(sim(image_vec, text_vec), 0.0)


def ref_clip_score(
    image_vec: np.ndarray, cand_vec: np.ndarray, ref_vecs: list[np.ndarray]
) -> float:
    """Harmonic mean of the image score and the best reference cosine.

    The image side is clip_score(image, candidate); the text side is
    max(0, max over references of cosine(candidate, ref)), already on a
    [0, 1] scale.  A zero on either side makes the harmonic mean zero.
    """
    if not ref_vecs:
        raise InputError("ref_clip_score: need at least one reference vector")
    image_side = clip_score(image_vec, cand_vec)
    text_side = max(0.0, max(sim(cand_vec, r) for r in ref_vecs))
    if image_side <= 0.0 or text_side <= 0.0:
        return 0.0
    return 2.0 * image_side * text_side / (image_side + text_side)

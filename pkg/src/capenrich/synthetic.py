"""Deterministic synthetic corpora for exercising the training stack.

Images are class-coded noise vectors and captions come from a tiny
closed vocabulary, so the image-to-detail mapping is exactly learnable
by the toy decoder and accuracy numbers are meaningful.

Two flavors:

* basic: the detail of image i is the color word of class i mod 8.
  Backbone pre-training uses detail windows [filler, filler, color]
  with fillers drawn at random per sample, which teaches the model to
  read the class at a fixed offset after SEP while staying agnostic to
  whatever occupies the two slots in between.  A length-2 prompt table
  later sits exactly in those slots.
* controllable: two detail families (colors and verbs) cued by
  disjoint trigger-token pools in the two slots, so a tuned prompt
  table can steer generation toward one family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import SPECIALS, Vocab
from .errors import InputError
from .tinylm import (
    PromptTable,
    TinyLMConfig,
    TrainExample,
    TrainHyper,
    TrainResult,
    batch_from_examples,
    decode,
    detail_accuracy,
    forward,
    init_params,
    init_prompts,
    train,
)

COLOR_WORDS = ("red", "blue", "green", "black", "white", "yellow", "purple", "orange")
VERB_WORDS = ("runs", "jumps", "sleeps", "eats", "flies", "swims", "sits", "waits")
FILLER_WORDS = tuple(f"f{i}" for i in range(16))
POOL_A_WORDS = tuple(f"qa{i}" for i in range(6))
POOL_B_WORDS = tuple(f"qb{i}" for i in range(6))
GENERIC_WORDS = ("a", "thing")


@dataclass(frozen=True)
class SyntheticSpec:
    n_images: int = 64
    n_classes: int = 8
    embed_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_classes <= len(COLOR_WORDS):
            raise InputError(f"n_classes must be in 1..{len(COLOR_WORDS)}")
        if self.n_classes > self.embed_dim:
            raise InputError("need one embedding dimension per class")
        if self.n_images < 1:
            raise InputError("n_images must be >= 1")


def basic_vocab() -> Vocab:
    return Vocab([*SPECIALS, *GENERIC_WORDS, *COLOR_WORDS, *FILLER_WORDS])


def controllable_vocab() -> Vocab:
    return Vocab(
        [*SPECIALS, *GENERIC_WORDS, *COLOR_WORDS, *VERB_WORDS, *POOL_A_WORDS, *POOL_B_WORDS]
    )


def synthetic_visuals(spec: SyntheticSpec) -> np.ndarray:
    """(n_images, embed_dim) float64: a unit bump on the class dimension
    plus small seeded noise everywhere."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    vis = rng.normal(0.0, 0.05, (spec.n_images, spec.embed_dim))
    for i in range(spec.n_images):
        vis[i, i % spec.n_classes] += 1.0
    return vis


def model_config(vocab: Vocab, spec: SyntheticSpec) -> TinyLMConfig:
    return TinyLMConfig(
        vocab_size=len(vocab),
        d_model=64,
        n_heads=4,
        n_layers=2,
        d_ffn=128,
        max_seq=16,
        n_visual=4,
        embed_dim=spec.embed_dim,
        seed=spec.seed,
    )


@dataclass
class SyntheticModel:
    """A pre-trained backbone bundled with its corpus."""

    spec: SyntheticSpec
    vocab: Vocab
    config: TinyLMConfig
    params: dict[str, np.ndarray]
    visuals: np.ndarray

    def class_word(self, i: int, words: tuple[str, ...]) -> str:
        return words[i % self.spec.n_classes]


def _generic_ids(vocab: Vocab) -> list[int]:
    return vocab.encode(list(GENERIC_WORDS))


def tuning_examples(
    spec: SyntheticSpec, vocab: Vocab, visuals: np.ndarray, words: tuple[str, ...]
) -> list[TrainExample]:
    """One example per image: generic context, single class-word detail."""
    gen = _generic_ids(vocab)
    return [
        TrainExample(visuals[i], gen, [vocab.id_of(words[i % spec.n_classes])])
        for i in range(spec.n_images)
    ]


def _pretrain_examples(
    spec: SyntheticSpec,
    vocab: Vocab,
    visuals: np.ndarray,
    fillers: tuple[str, ...],
    words: tuple[str, ...],
    variants: int,
    salt: int,
) -> list[TrainExample]:
    """Per image, `variants` samples with details [t1, t2, class word]
    where t1, t2 are random picks from the filler pool."""
    rng = np.random.Generator(np.random.PCG64(spec.seed * 7919 + salt))
    gen = _generic_ids(vocab)
    filler_ids = [vocab.id_of(w) for w in fillers]
    out: list[TrainExample] = []
    for i in range(spec.n_images):
        cls_id = vocab.id_of(words[i % spec.n_classes])
        for _ in range(variants):
            t1, t2 = rng.integers(0, len(filler_ids), 2)
            out.append(
                TrainExample(visuals[i], gen, [filler_ids[t1], filler_ids[t2], cls_id])
            )
    return out


def _pretrain(
    spec: SyntheticSpec,
    vocab: Vocab,
    examples_salted: list[tuple[tuple[str, ...], tuple[str, ...], int]],
    variants: int,
    hyper: TrainHyper | None,
) -> SyntheticModel:
    visuals = synthetic_visuals(spec)
    config = model_config(vocab, spec)
    examples: list[TrainExample] = []
    for fillers, words, salt in examples_salted:
        examples.extend(
            _pretrain_examples(spec, vocab, visuals, fillers, words, variants, salt)
        )
    if hyper is None:
        hyper = TrainHyper(lr=3e-3, batch_size=64, epochs=40, seed=spec.seed)
    result = train(init_params(config), config, None, examples, "full", hyper)
    return SyntheticModel(spec, vocab, config, result.params, visuals)


def build_basic(
    spec: SyntheticSpec | None = None,
    *,
    variants: int = 8,
    hyper: TrainHyper | None = None,
) -> SyntheticModel:
    spec = spec or SyntheticSpec()
    return _pretrain(spec, basic_vocab(), [(FILLER_WORDS, COLOR_WORDS, 1)], variants, hyper)


def build_controllable(
    spec: SyntheticSpec | None = None,
    *,
    variants: int = 8,
    hyper: TrainHyper | None = None,
) -> SyntheticModel:
    spec = spec or SyntheticSpec()
    return _pretrain(
        spec,
        controllable_vocab(),
        [(POOL_A_WORDS, COLOR_WORDS, 1), (POOL_B_WORDS, VERB_WORDS, 2)],
        variants,
        hyper,
    )


def tune_prompts(
    model: SyntheticModel,
    examples: list[TrainExample],
    *,
    length: int = 2,
    name: str = "lp-0",
    lr: float = 3e-4,
    batch_size: int = 48,
    max_steps: int = 200,
    seed: int | None = None,
) -> TrainResult:
    """Prompt-only tuning capped at max_steps optimizer steps."""
    table = init_prompts(model.config, length, name=name, seed=seed)
    steps_per_epoch = math.ceil(len(examples) / batch_size)
    hyper = TrainHyper(
        lr=lr,
        batch_size=batch_size,
        epochs=math.ceil(max_steps / steps_per_epoch),
        seed=model.spec.seed if seed is None else seed,
        max_steps=max_steps,
    )
    return train(model.params, model.config, table, examples, "prompt_only", hyper)


def class_accuracy(
    model: SyntheticModel, prompts: PromptTable | None, words: tuple[str, ...]
) -> float:
    """Teacher-forced accuracy of the class word across all images."""
    examples = tuning_examples(model.spec, model.vocab, model.visuals, words)
    logits, cache = forward(model.params, model.config, batch_from_examples(examples), prompts)
    return detail_accuracy(logits, cache["assembled"].targets)


def generated_vocab_fraction(
    model: SyntheticModel,
    prompts: PromptTable | None,
    words: tuple[str, ...],
    *,
    beam: int = 1,
    max_new: int = 3,
) -> float:
    """Fraction of generated tokens (best candidate per image, EOS not
    counted) that fall inside the given word family."""
    allowed = {model.vocab.id_of(w) for w in words}
    gen = _generic_ids(model.vocab)
    hits = 0
    total = 0
    for i in range(model.spec.n_images):
        results = decode(
            model.params, model.config, model.visuals[i], gen, prompts,
            beam=beam, max_new=max_new,
        )
        for tok in results[0].tokens:
            total += 1
            hits += int(tok in allowed)
    return hits / total if total else 0.0

"""Model and training hyperparameter containers."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import InputError


@dataclass(frozen=True)
class TinyLMConfig:
    """Architecture knobs for the toy decoder.

    embed_dim is the width of the incoming image vectors; the visual
    projection maps them into model space, and the projected vector is
    repeated across n_visual prefix slots (learned positions keep the
    slots distinguishable).
    """

    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ffn: int = 128
    max_seq: int = 64
    n_visual: int = 4
    embed_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_heads", "n_layers", "d_ffn", "max_seq", "n_visual", "embed_dim"):
            if getattr(self, name) < 1:
                raise InputError(f"TinyLMConfig.{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise InputError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if self.vocab_size < 6:
            raise InputError("vocab_size must cover the five specials plus content")


@dataclass
class TrainHyper:
    """Optimizer and loop settings.  max_steps caps total optimizer
    steps across epochs when set."""

    lr: float = 3e-4
    batch_size: int = 48
    epochs: int = 30
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise InputError("lr must be positive")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")
        if self.max_steps is not None and self.max_steps < 1:
            raise InputError("max_steps must be >= 1 when set")

"""Adam training loop with a frozen-backbone prompt mode.

mode "prompt_only" updates nothing but the prompt table: the backbone
arrays are never written, so their serialized bytes stay identical.
mode "full" updates every parameter (and the prompt table too when one
is attached).  Batch order is a seeded shuffle per epoch, which makes
the whole run a pure function of (seed, data, hyperparameters).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import InputError, TrainDivergence
from .config import TinyLMConfig, TrainHyper
from .model import (
    PromptTable,
    TrainExample,
    backward,
    batch_from_examples,
    detail_accuracy,
    forward,
)

MODES = ("prompt_only", "full")


class _Adam:
    """Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8) over a dict of arrays."""

    def __init__(self, shapes: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in shapes.items()}
        self.v = {k: np.zeros_like(v) for k, v in shapes.items()}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for key, g in grads.items():
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * (g * g)
            tensors[key] -= self.lr * (self.m[key] / bc1) / (np.sqrt(self.v[key] / bc2) + eps)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    prompts: PromptTable | None
    best_params: dict[str, np.ndarray]
    best_prompts: PromptTable | None
    history: list[dict] = field(default_factory=list)


def train(
    params: dict[str, np.ndarray],
    config: TinyLMConfig,
    prompts: PromptTable | None,
    examples: list[TrainExample],
    mode: str,
    hyper: TrainHyper,
    val_scorer: Callable[[dict[str, np.ndarray], PromptTable | None], float] | None = None,
    log_fn: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Run the loop; returns final and best-validation states.

    val_scorer (higher is better) picks the best checkpoint after each
    epoch; without one, best is simply final.  Ties keep the earlier
    epoch.  A non-finite loss aborts with TrainDivergence carrying the
    epoch index.  epochs == 0 returns the inputs untouched.
    """
    if mode not in MODES:
        raise InputError(f"unknown train mode {mode!r} (expected one of {MODES})")
    if not examples:
        raise InputError("train: no examples")
    if mode == "prompt_only" and prompts is None:
        raise InputError("prompt_only training needs a prompt table")

    if mode == "full":
        params = {k: v.copy() for k, v in params.items()}
        prompts = prompts.copy() if prompts is not None else None
    else:
        prompts = prompts.copy()

    param_opt = _Adam(params, hyper.lr) if mode == "full" else None
    prompt_opt = (
        _Adam({"vectors": prompts.vectors}, hyper.lr) if prompts is not None else None
    )

    rng = np.random.Generator(np.random.PCG64(hyper.seed))
    history: list[dict] = []
    best_score = None
    best_params = params
    best_prompts = prompts
    steps_done = 0
    stop = False

    for epoch in range(hyper.epochs):
        order = rng.permutation(len(examples))
        losses = []
        accs = []
        for start in range(0, len(examples), hyper.batch_size):
            if hyper.max_steps is not None and steps_done >= hyper.max_steps:
                stop = True
                break
            chunk = [examples[i] for i in order[start : start + hyper.batch_size]]
            batch = batch_from_examples(chunk)
            loss, grads, prompt_grads = backward(params, config, batch, prompts)
            if not np.isfinite(loss):
                raise TrainDivergence(epoch)
            if mode == "full":
                param_opt.step(params, grads)
            if prompts is not None and prompt_grads is not None:
                prompt_opt.step({"vectors": prompts.vectors}, {"vectors": prompt_grads})
            losses.append(loss)
            steps_done += 1
        if not losses:
            break

        logits, cache = forward(params, config, batch_from_examples(examples), prompts)
        accs.append(detail_accuracy(logits, cache["assembled"].targets))
        record = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "accuracy": accs[-1],
            "steps": steps_done,
        }
        if val_scorer is not None:
            record["val_score"] = float(val_scorer(params, prompts))
            if best_score is None or record["val_score"] > best_score:
                best_score = record["val_score"]
                best_params = {k: v.copy() for k, v in params.items()} if mode == "full" else params
                best_prompts = prompts.copy() if prompts is not None else None
        history.append(record)
        if log_fn is not None:
            log_fn(record)
        if stop:
            break

    if val_scorer is None:
        best_params, best_prompts = params, prompts
    return TrainResult(params, prompts, best_params, best_prompts, history)

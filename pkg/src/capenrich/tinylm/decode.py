"""Length-normalized beam search over the toy decoder.

Candidates are ranked by total log-probability divided by generated
token count (the EOS step counts toward both).  Expansion keeps the
top `beam` prefixes by raw cumulative log-probability; a prefix whose
last token is EOS retires to the finished pool.  All ties break on the
token-id sequence, so decoding is fully deterministic.  beam=1 is exact
greedy decoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import BOS_ID, EOS_ID, SEP_ID
from ..errors import InputError
from .config import TinyLMConfig
from .model import PromptTable, _core_forward


@dataclass(frozen=True)
class DecodeResult:
    """tokens excludes the terminating EOS; logprob and score include
    the EOS step when one was generated."""

    tokens: tuple[int, ...]
    logprob: float
    score: float
    finished: bool


def _context(params, config, visual, generic, prompts, detail_prefix):
    vis = np.asarray(visual, dtype=np.float64)
    if vis.shape != (config.embed_dim,):
        raise InputError(f"visual vector shape {vis.shape} != ({config.embed_dim},)")
    ids = [BOS_ID, *generic, SEP_ID]
    for tok in (*ids, *detail_prefix):
        if not 0 <= tok < config.vocab_size:
            raise InputError(f"token id {tok} out of vocab range")
    rows = [np.tile(vis @ params["vis_proj"], (config.n_visual, 1))]
    rows.append(params["tok_emb"][np.asarray(ids, dtype=int)])
    if prompts is not None:
        rows.append(prompts.vectors)
    if detail_prefix:
        rows.append(params["tok_emb"][np.asarray(detail_prefix, dtype=int)])
    x = np.concatenate(rows, axis=0)
    return x + params["pos_emb"][: x.shape[0]]


def _log_softmax(row):
    m = row.max()
    e = row - m
    return e - np.log(np.exp(e).sum())


def decode(
    params: dict[str, np.ndarray],
    config: TinyLMConfig,
    visual: np.ndarray,
    generic: list[int],
    prompts: PromptTable | None = None,
    beam: int = 5,
    max_new: int = 20,
    detail_prefix: list[int] | None = None,
) -> list[DecodeResult]:
    """Generate detail continuations after [visual] BOS generic SEP [prompts].

    detail_prefix, when given, is a forced start of the detail span:
    its tokens sit after the prompt rows and the returned tokens hold
    the continuation only.  Returns every finished or length-capped
    candidate, best first by normalized score (ties by token ids).
    The context plus max_new must fit in max_seq.
    """
    if beam < 1:
        raise InputError(f"beam must be >= 1, got {beam}")
    if max_new < 1:
        raise InputError(f"max_new must be >= 1, got {max_new}")
    ctx = _context(params, config, visual, generic, prompts, list(detail_prefix or []))
    t0 = ctx.shape[0]
    if t0 + max_new > config.max_seq:
        raise InputError(
            f"context ({t0}) plus max_new ({max_new}) exceeds max_seq ({config.max_seq})"
        )

    tok_emb, pos_emb = params["tok_emb"], params["pos_emb"]
    active: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[int, ...], float]] = []

    for step in range(max_new):
        if not active:
            break
        t = t0 + step
        x = np.zeros((len(active), t, config.d_model))
        for i, (toks, _) in enumerate(active):
            x[i, :t0] = ctx
            if toks:
                x[i, t0:] = tok_emb[np.asarray(toks, dtype=int)] + pos_emb[t0:t]
        logits, _ = _core_forward(params, config, x)
        expansions: list[tuple[tuple[int, ...], float]] = []
        for i, (toks, lp) in enumerate(active):
            logprobs = _log_softmax(logits[i, -1])
            for v in range(config.vocab_size):
                expansions.append(((*toks, v), lp + float(logprobs[v])))
        expansions.sort(key=lambda c: (-c[1], c[0]))
        kept = expansions[:beam]
        active = []
        for toks, lp in kept:
            if toks[-1] == EOS_ID:
                finished.append((toks, lp))
            else:
                active.append((toks, lp))

    results = [
        DecodeResult(toks[:-1], lp, lp / len(toks), True) for toks, lp in finished
    ] + [
        DecodeResult(toks, lp, lp / len(toks), False) for toks, lp in active
    ]
    results.sort(key=lambda r: (-r.score, r.tokens))
    return results

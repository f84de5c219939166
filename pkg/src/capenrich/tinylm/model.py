"""Forward, loss, and hand-written backward for the toy decoder.

Sequence layout per sample:

    [visual prefix: n_visual slots] [BOS] generic [SEP] [prompt vectors] details [EOS]

The visual prefix is the projected image vector repeated across its
slots; prompt vectors are continuous rows injected between SEP and the
details.  Attention is causal except that visual-prefix positions are
visible to every query.  The loss is mean next-token cross-entropy over
detail positions only (the EOS terminator included): the prediction for
the first detail token reads the hidden state of the last prompt slot,
or of SEP when no prompts are attached.

Shapes follow (batch, time, feature); everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import BOS_ID, EOS_ID, SEP_ID
from ..errors import InputError
from .config import TinyLMConfig

_LN_EPS = 1e-5
_INIT_STD = 0.02


@dataclass
class PromptTable:
    """Named table of tunable prompt vectors, shape (length, d_model)."""

    name: str
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise InputError(f"prompt table {self.name!r}: need shape (length >= 1, d_model)")

    @property
    def length(self) -> int:
        return int(self.vectors.shape[0])

    def copy(self) -> "PromptTable":
        return PromptTable(self.name, self.vectors.copy())


@dataclass
class TrainExample:
    visual: np.ndarray       # (embed_dim,)
    generic: list[int]
    details: list[int]


@dataclass
class TrainBatch:
    visual: np.ndarray       # (B, embed_dim)
    generics: list[list[int]]
    details: list[list[int]]

    def __len__(self) -> int:
        return len(self.generics)


def batch_from_examples(examples: list[TrainExample]) -> TrainBatch:
    if not examples:
        raise InputError("batch_from_examples: empty example list")
    return TrainBatch(
        visual=np.stack([np.asarray(e.visual, dtype=np.float64) for e in examples]),
        generics=[list(e.generic) for e in examples],
        details=[list(e.details) for e in examples],
    )


# ---------------------------------------------------------------------------
# parameter initialization


def init_params(config: TinyLMConfig) -> dict[str, np.ndarray]:
    """Seeded Gaussian init (std 0.02); zero biases; unit LN scales.

    The returned dict's insertion order is the canonical tensor order
    used by the checkpoint format.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    d, f, v = config.d_model, config.d_ffn, config.vocab_size

    def gauss(*shape):
        return rng.normal(0.0, _INIT_STD, shape)

    p: dict[str, np.ndarray] = {}
    p["tok_emb"] = gauss(v, d)
    p["pos_emb"] = gauss(config.max_seq, d)
    p["vis_proj"] = gauss(config.embed_dim, d)
    for i in range(config.n_layers):
        p[f"l{i}.ln1.g"] = np.ones(d)
        p[f"l{i}.ln1.b"] = np.zeros(d)
        p[f"l{i}.attn.wq"] = gauss(d, d)
        p[f"l{i}.attn.bq"] = np.zeros(d)
        p[f"l{i}.attn.wk"] = gauss(d, d)
        p[f"l{i}.attn.bk"] = np.zeros(d)
        p[f"l{i}.attn.wv"] = gauss(d, d)
        p[f"l{i}.attn.bv"] = np.zeros(d)
        p[f"l{i}.attn.wo"] = gauss(d, d)
        p[f"l{i}.attn.bo"] = np.zeros(d)
        p[f"l{i}.ln2.g"] = np.ones(d)
        p[f"l{i}.ln2.b"] = np.zeros(d)
        p[f"l{i}.ffn.w1"] = gauss(d, f)
        p[f"l{i}.ffn.b1"] = np.zeros(f)
        p[f"l{i}.ffn.w2"] = gauss(f, d)
        p[f"l{i}.ffn.b2"] = np.zeros(d)
    p["ln_f.g"] = np.ones(d)
    p["ln_f.b"] = np.zeros(d)
    p["out_proj"] = gauss(d, v)
    return p


def init_prompts(
    config: TinyLMConfig,
    length: int,
    mode: str = "random",
    word_ids: list[int] | None = None,
    params: dict[str, np.ndarray] | None = None,
    name: str = "lp-0",
    seed: int | None = None,
) -> PromptTable:
    """Create a prompt table: random Gaussian rows, or copies of word
    embeddings (word mode needs exactly `length` in-vocab ids)."""
    if length < 1:
        raise InputError("prompt length must be >= 1")
    if mode == "random":
        base = config.seed if seed is None else seed
        salt = sum(ord(c) * 31**k for k, c in enumerate(name)) % (2**31)
        rng = np.random.Generator(np.random.PCG64(base * 1_000_003 + salt))
        return PromptTable(name, rng.normal(0.0, _INIT_STD, (length, config.d_model)))
    if mode == "word":
        if params is None:
            raise InputError("word-mode prompt init needs model params")
        if word_ids is None or len(word_ids) != length:
            raise InputError(f"word-mode prompt init needs exactly {length} word ids")
        for w in word_ids:
            if not 0 <= w < config.vocab_size:
                raise InputError(f"word id {w} out of vocab range")
        return PromptTable(name, params["tok_emb"][np.asarray(word_ids, dtype=int)].copy())
    raise InputError(f"unknown prompt init mode {mode!r}")


# ---------------------------------------------------------------------------
# sequence assembly


@dataclass
class _Assembled:
    x: np.ndarray            # (B, T, d) inputs incl. position embeddings
    targets: np.ndarray      # (B, T) int64; -1 = not a loss position
    token_ids: np.ndarray    # (B, T) int64; -1 = not a token slot
    prompt_slot: np.ndarray  # (B, T) int64; -1 = not a prompt slot
    lengths: np.ndarray      # (B,) real sequence lengths


def _assemble(
    params: dict[str, np.ndarray],
    config: TinyLMConfig,
    batch: TrainBatch,
    prompts: PromptTable | None,
) -> _Assembled:
    bsz = len(batch)
    if batch.visual.shape != (bsz, config.embed_dim):
        raise InputError(
            f"visual batch shape {batch.visual.shape} != ({bsz}, {config.embed_dim})"
        )
    plen = prompts.length if prompts is not None else 0
    seqs = []
    for b in range(bsz):
        ctx = [BOS_ID, *batch.generics[b], SEP_ID]
        det = [*batch.details[b], EOS_ID]
        for tok in (*ctx, *det):
            if not 0 <= tok < config.vocab_size:
                raise InputError(f"sample {b}: token id {tok} out of vocab range")
        total = config.n_visual + len(ctx) + plen + len(det)
        if total > config.max_seq:
            raise InputError(
                f"sample {b}: sequence length {total} exceeds max_seq {config.max_seq}"
            )
        seqs.append((ctx, det, total))

    tmax = max(s[2] for s in seqs)
    d = config.d_model
    x = np.zeros((bsz, tmax, d))
    targets = np.full((bsz, tmax), -1, dtype=np.int64)
    token_ids = np.full((bsz, tmax), -1, dtype=np.int64)
    prompt_slot = np.full((bsz, tmax), -1, dtype=np.int64)
    lengths = np.zeros(bsz, dtype=np.int64)

    vis = batch.visual @ params["vis_proj"]  # (B, d)
    for b, (ctx, det, total) in enumerate(seqs):
        x[b, : config.n_visual] = vis[b]
        t = config.n_visual
        for tok in ctx:
            x[b, t] = params["tok_emb"][tok]
            token_ids[b, t] = tok
            t += 1
        for l in range(plen):
            x[b, t] = prompts.vectors[l]
            prompt_slot[b, t] = l
            t += 1
        for tok in det:
            x[b, t] = params["tok_emb"][tok]
            token_ids[b, t] = tok
            targets[b, t] = tok
            t += 1
        x[b, :total] += params["pos_emb"][:total]
        lengths[b] = total
    return _Assembled(x, targets, token_ids, prompt_slot, lengths)


# ---------------------------------------------------------------------------
# primitive layers


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return xhat * g + b, xhat, inv


def _layer_norm_backward(dy, xhat, inv, g):
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _softmax_last(scores):
    m = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x, n_heads):
    bsz, t, d = x.shape
    return x.reshape(bsz, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    bsz, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(bsz, t, h * dh)


def attention_mask(t: int, n_visual: int) -> np.ndarray:
    """(T, T) boolean: key j is visible to query i iff j is a visual
    slot or j <= i."""
    idx = np.arange(t)
    return (idx[None, :] < n_visual) | (idx[None, :] <= idx[:, None])


# ---------------------------------------------------------------------------
# forward


def _core_forward(params, config, x):
    """Transformer stack over assembled inputs.  Returns logits and the
    activation cache needed for the backward pass."""
    t = x.shape[1]
    mask = attention_mask(t, config.n_visual)
    scale = 1.0 / np.sqrt(config.d_model // config.n_heads)
    cache = {"x0": x, "mask": mask, "layers": []}
    for i in range(config.n_layers):
        lp = {k.split(".", 1)[1]: params[k] for k in params if k.startswith(f"l{i}.")}
        a1, xhat1, inv1 = _layer_norm(x, lp["ln1.g"], lp["ln1.b"])
        q = _split_heads(a1 @ lp["attn.wq"] + lp["attn.bq"], config.n_heads)
        k = _split_heads(a1 @ lp["attn.wk"] + lp["attn.bk"], config.n_heads)
        v = _split_heads(a1 @ lp["attn.wv"] + lp["attn.bv"], config.n_heads)
        scores = (q @ k.swapaxes(-1, -2)) * scale
        scores = np.where(mask, scores, -np.inf)
        p = _softmax_last(scores)
        o = _merge_heads(p @ v)
        attn = o @ lp["attn.wo"] + lp["attn.bo"]
        x_mid = x + attn
        a2, xhat2, inv2 = _layer_norm(x_mid, lp["ln2.g"], lp["ln2.b"])
        h_pre = a2 @ lp["ffn.w1"] + lp["ffn.b1"]
        h = np.maximum(h_pre, 0.0)
        x_out = x_mid + h @ lp["ffn.w2"] + lp["ffn.b2"]
        cache["layers"].append(
            dict(a1=a1, xhat1=xhat1, inv1=inv1, q=q, k=k, v=v, p=p, o=o,
                 xhat2=xhat2, inv2=inv2, a2=a2, h_pre=h_pre, h=h)
        )
        x = x_out
    hf, xhatf, invf = _layer_norm(x, params["ln_f.g"], params["ln_f.b"])
    cache["hf"], cache["xhatf"], cache["invf"] = hf, xhatf, invf
    logits = hf @ params["out_proj"]
    return logits, cache


def forward(
    params: dict[str, np.ndarray],
    config: TinyLMConfig,
    batch: TrainBatch,
    prompts: PromptTable | None = None,
):
    """Assemble the batch and run the stack.  Returns (logits, cache);
    cache["assembled"] carries the targets/loss layout."""
    asm = _assemble(params, config, batch, prompts)
    logits, cache = _core_forward(params, config, asm.x)
    cache["assembled"] = asm
    return logits, cache


# ---------------------------------------------------------------------------
# loss


def _loss_rows(targets: np.ndarray):
    rows_b, rows_t = np.nonzero(targets >= 0)
    if rows_b.size == 0:
        raise InputError("loss: batch has no detail positions")
    return rows_b, rows_t


def sequence_loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean next-token cross-entropy over marked target positions.

    targets[b, t] >= 0 marks the token at position t as a detail token
    whose prediction is read from the logits at position t - 1.
    """
    rows_b, rows_t = _loss_rows(targets)
    rows = logits[rows_b, rows_t - 1]                    # (N, V)
    m = rows.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(rows - m).sum(axis=-1))
    gold = rows[np.arange(rows.shape[0]), targets[rows_b, rows_t]]
    return float(np.mean(lse - gold))


def detail_accuracy(
    logits: np.ndarray, targets: np.ndarray, include_eos: bool = False
) -> float:
    """Teacher-forced argmax accuracy over detail positions (the EOS
    terminator excluded by default)."""
    rows_b, rows_t = _loss_rows(targets)
    gold = targets[rows_b, rows_t]
    if not include_eos:
        keep = gold != EOS_ID
        if not keep.any():
            raise InputError("detail_accuracy: nothing but EOS targets")
        rows_b, rows_t, gold = rows_b[keep], rows_t[keep], gold[keep]
    pred = logits[rows_b, rows_t - 1].argmax(axis=-1)
    return float(np.mean(pred == gold))


# ---------------------------------------------------------------------------
# backward


def backward(
    params: dict[str, np.ndarray],
    config: TinyLMConfig,
    batch: TrainBatch,
    prompts: PromptTable | None = None,
):
    """Full reverse-mode pass.

    Returns (loss, grads, prompt_grads): grads matches params key for
    key; prompt_grads is an array shaped like prompts.vectors, or None
    when no prompts were attached.  Gradients are of the mean loss, so
    duplicating every sample leaves them unchanged.
    """
    logits, cache = forward(params, config, batch, prompts)
    asm: _Assembled = cache["assembled"]
    rows_b, rows_t = _loss_rows(asm.targets)
    n_rows = rows_b.size

    rows = logits[rows_b, rows_t - 1]
    probs = _softmax_last(rows)
    probs[np.arange(n_rows), asm.targets[rows_b, rows_t]] -= 1.0
    dlogits = np.zeros_like(logits)
    np.add.at(dlogits, (rows_b, rows_t - 1), probs / n_rows)

    m = rows.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(rows - m).sum(axis=-1))
    gold = rows[np.arange(n_rows), asm.targets[rows_b, rows_t]]
    loss = float(np.mean(lse - gold))

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    scale = 1.0 / np.sqrt(config.d_model // config.n_heads)

    # output head and final norm
    grads["out_proj"] += np.einsum("btd,btv->dv", cache["hf"], dlogits)
    dhf = dlogits @ params["out_proj"].T
    dx, dgf, dbf = _layer_norm_backward(dhf, cache["xhatf"], cache["invf"], params["ln_f.g"])
    grads["ln_f.g"] += dgf
    grads["ln_f.b"] += dbf

    for i in reversed(range(config.n_layers)):
        lc = cache["layers"][i]
        pre = f"l{i}."
        lp = {k.split(".", 1)[1]: params[k] for k in params if k.startswith(pre)}

        # ffn branch
        dffn = dx
        dh = dffn @ lp["ffn.w2"].T
        grads[pre + "ffn.w2"] += np.einsum("btf,btd->fd", lc["h"], dffn)
        grads[pre + "ffn.b2"] += dffn.sum(axis=(0, 1))
        dh_pre = dh * (lc["h_pre"] > 0.0)
        grads[pre + "ffn.w1"] += np.einsum("btd,btf->df", lc["a2"], dh_pre)
        grads[pre + "ffn.b1"] += dh_pre.sum(axis=(0, 1))
        da2 = dh_pre @ lp["ffn.w1"].T
        dln2, dg2, db2 = _layer_norm_backward(da2, lc["xhat2"], lc["inv2"], lp["ln2.g"])
        grads[pre + "ln2.g"] += dg2
        grads[pre + "ln2.b"] += db2
        dx_mid = dx + dln2

        # attention branch
        dattn = dx_mid
        grads[pre + "attn.wo"] += np.einsum("btd,bte->de", lc["o"], dattn)
        grads[pre + "attn.bo"] += dattn.sum(axis=(0, 1))
        do = _split_heads(dattn @ lp["attn.wo"].T, config.n_heads)
        dp = do @ lc["v"].swapaxes(-1, -2)
        dv = lc["p"].swapaxes(-1, -2) @ do
        ds = lc["p"] * (dp - (dp * lc["p"]).sum(axis=-1, keepdims=True))
        dq = (ds @ lc["k"]) * scale
        dk = (ds.swapaxes(-1, -2) @ lc["q"]) * scale
        dq_m, dk_m, dv_m = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
        grads[pre + "attn.wq"] += np.einsum("btd,bte->de", lc["a1"], dq_m)
        grads[pre + "attn.bq"] += dq_m.sum(axis=(0, 1))
        grads[pre + "attn.wk"] += np.einsum("btd,bte->de", lc["a1"], dk_m)
        grads[pre + "attn.bk"] += dk_m.sum(axis=(0, 1))
        grads[pre + "attn.wv"] += np.einsum("btd,bte->de", lc["a1"], dv_m)
        grads[pre + "attn.bv"] += dv_m.sum(axis=(0, 1))
        da1 = dq_m @ lp["attn.wq"].T + dk_m @ lp["attn.wk"].T + dv_m @ lp["attn.wv"].T
        dln1, dg1, db1 = _layer_norm_backward(da1, lc["xhat1"], lc["inv1"], lp["ln1.g"])
        grads[pre + "ln1.g"] += dg1
        grads[pre + "ln1.b"] += db1
        dx = dx_mid + dln1

    # assembly: scatter dx into embeddings, prompts, and the visual projection
    plen = prompts.length if prompts is not None else 0
    dprompts = np.zeros((plen, config.d_model)) if plen else None
    bsz = len(batch)
    dvis = np.zeros((bsz, config.d_model))
    for b in range(bsz):
        t_len = int(asm.lengths[b])
        dxb = dx[b, :t_len]
        grads["pos_emb"][:t_len] += dxb
        dvis[b] = dxb[: config.n_visual].sum(axis=0)
        for t in range(config.n_visual, t_len):
            tok = asm.token_ids[b, t]
            if tok >= 0:
                grads["tok_emb"][tok] += dxb[t]
            else:
                slot = asm.prompt_slot[b, t]
                if slot >= 0:
                    dprompts[slot] += dxb[t]
    grads["vis_proj"] += batch.visual.T @ dvis
    return loss, grads, dprompts

"""Command-line pipeline driver.

Subcommands cover the full desk-scale loop:

    build-data       mine generic+detail training samples from captions
    gen-prompts      instantiate prompt templates for generic captions
    make-embeddings  build toy image embeddings (EMB1 file)
    train            tune prompt vectors or fine-tune the whole decoder
    enrich           generate, filter, and emit enriched captions
    build-hard-pool  curate a hard distractor pool for retrieval
    eval             score enriched captions and write reports

Exit codes: 0 success, 2 rejected input, 3 numeric failure.  When a
subcommand takes --seed and none is given, the CAPENRICH_SEED
environment variable (default 0) is used.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .corpus import SPLITS, CaptionSet, Vocab, build_vocab, load_corpus, tokenize
from .databuild import (
    ATTR,
    KINDS,
    REL,
    build_samples,
    read_samples,
    write_samples,
)
from .embed import (
    EmbeddingTable,
    clip_score,
    load_embeddings,
    ref_clip_score,
    save_embeddings,
    sim,
    toy_image_embed,
    toy_text_embed,
)
from .errors import InputError, NumericError
from .evalsuite import (
    MetricReport,
    bleu4,
    build_hard_pool,
    build_naive_pool,
    cider_d,
    div_n,
    load_pool,
    mbleu4,
    mean_recall,
    rank_pool,
    save_pool,
    self_cider,
    spice_lite,
    write_report_csv,
    write_report_json,
)
from .postproc import (
    EnrichedRecord,
    decode_tokens_to_detail,
    fallback_record,
    filter_candidates,
    read_enriched,
    select_best,
    write_enriched,
)
from .prompts import builtin_templates, instantiate, load_templates
from .tinylm import (
    Checkpoint,
    PromptTable,
    TinyLMConfig,
    TrainExample,
    TrainHyper,
    decode,
    init_params,
    init_prompts,
    load_checkpoint,
    save_checkpoint,
    train,
)


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    raw = os.environ.get("CAPENRICH_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"CAPENRICH_SEED must be an integer, got {raw!r}") from None


def _select_split(corpus: list[CaptionSet], name: str) -> list[CaptionSet]:
    if name == "all":
        return corpus
    picked = [cs for cs in corpus if cs.split == name]
    if not picked:
        raise InputError(f"no images in split {name!r}")
    return picked


# ------------------------------------------------------------- build-data

def cmd_build_data(args) -> int:
    corpus = load_corpus(args.captions, args.split)
    corpus = _select_split(corpus, args.use_split)
    samples = []
    for cs in corpus:
        samples.extend(build_samples(cs, max_details=args.max_details))
    write_samples(samples, args.out)
    by_kind = {k: sum(1 for s in samples if s.kind == k) for k in KINDS}
    print(
        f"{len(corpus)} images -> {len(samples)} samples "
        f"(ATTR {by_kind[ATTR]}, REL {by_kind[REL]}) -> {args.out}"
    )
    return 0


# ------------------------------------------------------------ gen-prompts

def _chosen_templates(args):
    if args.templates:
        return load_templates(args.templates)
    return builtin_templates(args.set)


def cmd_gen_prompts(args) -> int:
    templates = _chosen_templates(args)
    if (args.generic is None) == (args.samples is None):
        raise InputError("gen-prompts needs exactly one of --generic or --samples")

    if args.generic is not None:
        lines = []
        for t in templates:
            for text in instantiate(t, args.generic):
                lines.append({"generic": args.generic, "prompt": text, "template": t.name})
        if args.out:
            _write_jsonl(lines, args.out)
        else:
            for rec in lines:
                print(rec["prompt"])
        return 0

    if not args.out:
        raise InputError("gen-prompts --samples needs --out")
    generics: dict[str, str] = {}
    for s in read_samples(args.samples):
        generics.setdefault(s.image_id, s.generic)
    lines = []
    for iid, generic in generics.items():
        for t in templates:
            for text in instantiate(t, generic):
                lines.append(
                    {"image_id": iid, "generic": generic, "prompt": text, "template": t.name}
                )
    _write_jsonl(lines, args.out)
    print(f"{len(generics)} images -> {len(lines)} prompts -> {args.out}")
    return 0


def _write_jsonl(records: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


# -------------------------------------------------------- make-embeddings

def cmd_make_embeddings(args) -> int:
    seed = _resolve_seed(args.seed)
    corpus = _select_split(load_corpus(args.captions, args.split), args.use_split)
    if not corpus:
        raise InputError("make-embeddings: corpus is empty")
    ids = [cs.image_id for cs in corpus]
    vecs = np.stack([toy_image_embed(cs, dim=args.dim, seed=seed) for cs in corpus])
    save_embeddings(EmbeddingTable(ids, vecs), args.out)
    print(f"{len(ids)} image embeddings (dim {args.dim}) -> {args.out}")
    return 0


# ------------------------------------------------------------------ train

def _encode_samples(samples, vocab, table, config, plen):
    """Token-encode samples and drop the ones that cannot fit the
    sequence budget.  Returns (examples, meta, dropped)."""
    budget = config.max_seq - (config.n_visual + 3 + plen)  # BOS, SEP, EOS
    examples: list[TrainExample] = []
    meta = []
    dropped = 0
    for s in samples:
        gids = vocab.encode(tokenize(s.generic))
        dids = vocab.encode(tokenize(", ".join(s.details)))
        if len(gids) + len(dids) > budget:
            dropped += 1
            continue
        examples.append(TrainExample(table.vec(s.image_id), gids, dids))
        meta.append((s.image_id, s.generic, gids))
    return examples, meta, dropped


def _r1_scorer(meta, table, vocab, config, seed, beam, max_new):
    """Self-retrieval R@1 over the images of `meta`, using greedy or
    beam decoding plus the toy text embedding as the query."""
    uniq: dict[str, tuple[str, list[int]]] = {}
    for iid, generic, gids in meta:
        uniq.setdefault(iid, (generic, gids))
    ids = list(uniq)
    pool = build_naive_pool(table, ids)

    def scorer(params, prompts) -> float:
        plen = prompts.length if prompts is not None else 0
        hits = 0
        for iid in ids:
            generic, gids = uniq[iid]
            avail = config.max_seq - (config.n_visual + 2 + len(gids) + plen)
            if avail < 1:
                continue
            res = decode(
                params, config, table.vec(iid), gids, prompts,
                beam=beam, max_new=min(max_new, avail),
            )
            detail = decode_tokens_to_detail(vocab.decode(list(res[0].tokens)))
            text = f"{generic}, {detail}" if detail else generic
            query = toy_text_embed(tokenize(text), dim=pool.dim, seed=seed)
            if rank_pool(query, pool)[0] == iid:
                hits += 1
        return hits / len(ids)

    return scorer


def _log_epoch(rec: dict) -> None:
    line = f"epoch {rec['epoch']:3d}  loss {rec['loss']:.4f}  acc {rec['accuracy']:.3f}"
    if "val_score" in rec:
        line += f"  val_r1 {rec['val_score']:.3f}"
    print(line)


def cmd_train(args) -> int:
    seed = _resolve_seed(args.seed)
    table = load_embeddings(args.embeddings)
    samples = read_samples(args.samples)
    if args.kind != "all":
        samples = [s for s in samples if s.kind == args.kind]
    if not samples:
        raise InputError(f"train: no samples of kind {args.kind!r}")

    if args.ckpt_in:
        if args.captions:
            raise InputError("--captions and --ckpt-in are mutually exclusive; "
                             "the checkpoint fixes the vocabulary")
        ckpt = load_checkpoint(args.ckpt_in)
        vocab = Vocab(ckpt.vocab_tokens)
        config = ckpt.config
        params = ckpt.params
        existing = dict(ckpt.prompts)
        if table.dim != config.embed_dim:
            raise InputError(
                f"embedding dim {table.dim} != checkpoint embed_dim {config.embed_dim}"
            )
    else:
        if not args.captions:
            raise InputError("train: need --captions (for the vocabulary) or --ckpt-in")
        vocab = build_vocab(load_corpus(args.captions, args.split))
        config = TinyLMConfig(
            vocab_size=len(vocab),
            d_model=args.d_model,
            n_heads=args.n_heads,
            n_layers=args.n_layers,
            d_ffn=args.d_ffn,
            max_seq=args.max_seq,
            n_visual=args.n_visual,
            embed_dim=table.dim,
            seed=seed,
        )
        params = init_params(config)
        existing = {}

    prompts = None
    if args.mode == "prompt_only":
        if args.prompt_name in existing:
            prompts = existing[args.prompt_name]
            if prompts.length != args.num_prompts:
                raise InputError(
                    f"checkpoint table {args.prompt_name!r} has length "
                    f"{prompts.length}, --num-prompts says {args.num_prompts}"
                )
        elif args.prompt_init == "word":
            words = [w for w in (args.prompt_words or "").replace(",", " ").split() if w]
            ids = vocab.encode(words)
            prompts = init_prompts(
                config, args.num_prompts, mode="word", word_ids=ids,
                params=params, name=args.prompt_name,
            )
        else:
            prompts = init_prompts(
                config, args.num_prompts, name=args.prompt_name, seed=seed
            )

    plen = prompts.length if prompts is not None else 0
    examples, meta, dropped = _encode_samples(samples, vocab, table, config, plen)
    if dropped:
        print(f"dropped {dropped} over-length samples", file=sys.stderr)
    if not examples:
        raise InputError("train: every sample exceeded the sequence budget")

    val_scorer = None
    if args.val_samples:
        val_raw = read_samples(args.val_samples)
        _, val_meta, _ = _encode_samples(val_raw, vocab, table, config, plen)
        if not val_meta:
            raise InputError("train: no usable validation samples")
        val_scorer = _r1_scorer(
            val_meta, table, vocab, config, seed, args.val_beam, args.max_new
        )

    lr = args.lr if args.lr is not None else (3e-4 if args.mode == "prompt_only" else 3e-6)
    hyper = TrainHyper(
        lr=lr, batch_size=args.batch_size, epochs=args.epochs,
        seed=seed, max_steps=args.max_steps,
    )
    result = train(
        params, config, prompts, examples, args.mode, hyper,
        val_scorer=val_scorer, log_fn=_log_epoch,
    )

    out_prompts = dict(existing)
    if result.best_prompts is not None:
        out_prompts[result.best_prompts.name] = result.best_prompts
    save_checkpoint(
        Checkpoint(config, result.best_params, out_prompts, list(vocab.tokens)), args.out
    )
    print(f"{len(examples)} samples, mode {args.mode} -> {args.out}")
    return 0


# ----------------------------------------------------------------- enrich

def _load_generics(args) -> list[tuple[str, str]]:
    """(image_id, generic) pairs from --samples or --generics."""
    if (args.samples is None) == (args.generics is None):
        raise InputError("enrich needs exactly one of --samples or --generics")
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    if args.samples is not None:
        for s in read_samples(args.samples):
            if s.image_id not in seen:
                seen.add(s.image_id)
                pairs.append((s.image_id, s.generic))
        return pairs
    with open(args.generics, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                iid, generic = str(obj["image_id"]), str(obj["generic"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise InputError(f"{args.generics}:{lineno}: bad generics record") from exc
            if not generic.strip():
                raise InputError(f"{args.generics}:{lineno}: empty generic caption")
            if iid not in seen:
                seen.add(iid)
                pairs.append((iid, generic))
    if not pairs:
        raise InputError(f"{args.generics}: no generics found")
    return pairs


def _prompt_candidates(ckpt, vocab, config, visual, gids, tables, beam, max_new):
    out: list[tuple[str, str]] = []       # (detail text, source)
    for name, prompt_table in tables:
        avail = config.max_seq - (config.n_visual + 2 + len(gids) + prompt_table.length)
        if avail < 1:
            continue
        results = decode(
            ckpt.params, config, visual, gids, prompt_table,
            beam=beam, max_new=min(max_new, avail),
        )
        for r in results[:beam]:
            detail = decode_tokens_to_detail(vocab.decode(list(r.tokens)))
            if detail:
                out.append((detail, f"prompt:{name}"))
    return out


def _template_candidates(ckpt, vocab, config, visual, gids, generic, templates, beam, max_new):
    out: list[tuple[str, str]] = []
    for t in templates:
        for line in instantiate(t, generic):
            filled = line[len(generic) + 2 :]
            prefix = vocab.encode(tokenize(filled))
            avail = config.max_seq - (config.n_visual + 2 + len(gids) + len(prefix))
            if avail < 1:
                continue
            results = decode(
                ckpt.params, config, visual, gids, None,
                beam=beam, max_new=min(max_new, avail), detail_prefix=prefix,
            )
            cont = decode_tokens_to_detail(vocab.decode(list(results[0].tokens)))
            detail = f"{filled} {cont}" if cont else filled
            out.append((detail, f"template:{t.name}"))
    return out


def cmd_enrich(args) -> int:
    seed = _resolve_seed(args.seed)
    ckpt = load_checkpoint(args.ckpt)
    vocab = Vocab(list(ckpt.vocab_tokens))
    config = ckpt.config
    table = load_embeddings(args.embeddings)
    if table.dim != config.embed_dim:
        raise InputError(
            f"embedding dim {table.dim} != checkpoint embed_dim {config.embed_dim}"
        )
    pairs = _load_generics(args)

    if args.use_templates:
        templates = _chosen_templates(args)
        tables = None
    elif args.prompt_name == "all":
        if not ckpt.prompts:
            raise InputError(
                "checkpoint has no prompt tables; tune one or pass --use-templates"
            )
        tables = list(ckpt.prompts.items())
    else:
        names = [n.strip() for n in args.prompt_name.split(",") if n.strip()]
        if not names:
            raise InputError(f"--prompt-name has no names: {args.prompt_name!r}")
        for name in names:
            if name not in ckpt.prompts:
                raise InputError(f"checkpoint has no prompt table {name!r}")
        # repeated names are harmless; duplicate candidate texts collapse later
        tables = [(name, ckpt.prompts[name]) for name in names]

    records: list[EnrichedRecord] = []
    fallbacks = 0
    for iid, generic in pairs:
        visual = table.vec(iid)
        gids = vocab.encode(tokenize(generic))
        if args.use_templates:
            cands = _template_candidates(
                ckpt, vocab, config, visual, gids, generic, templates,
                args.beam, args.max_new,
            )
        else:
            cands = _prompt_candidates(
                ckpt, vocab, config, visual, gids, tables, args.beam, args.max_new
            )
        texts: list[str] = []
        sources: list[str] = []
        for text, source in cands:
            if text not in texts:
                texts.append(text)
                sources.append(source)
        survivors = filter_candidates(generic, texts, visual, seed=seed)
        base = sim(toy_text_embed(tokenize(generic), dim=table.dim, seed=seed), visual)
        if args.emit == "best":
            best = select_best(survivors)
            if best is None:
                fallbacks += 1
                records.append(fallback_record(iid, generic))
            else:
                records.append(
                    EnrichedRecord(iid, generic, best.enriched,
                                   sources[best.index], best.score - base)
                )
        else:
            if not survivors:
                fallbacks += 1
                records.append(fallback_record(iid, generic))
            for s in survivors:
                records.append(
                    EnrichedRecord(iid, generic, s.enriched, sources[s.index], s.score - base)
                )
    write_enriched(records, args.out)
    print(f"{len(pairs)} images, {len(records)} lines, {fallbacks} fallbacks -> {args.out}")
    return 0


# -------------------------------------------------------- build-hard-pool

def cmd_build_hard_pool(args) -> int:
    seed = _resolve_seed(args.seed)
    targets = load_embeddings(args.target_embeddings)
    reservoir = load_embeddings(args.reservoir_embeddings)
    caption_sets = {cs.image_id: cs for cs in load_corpus(args.captions, args.split)}
    pool = build_hard_pool(
        targets, reservoir, caption_sets, per_target=args.per_target, seed=seed
    )
    save_pool(pool, args.out)
    print(
        f"hard pool: {len(targets)} targets + {len(pool.ids) - len(targets)} "
        f"distractors -> {args.out}"
    )
    return 0


# ------------------------------------------------------------------- eval

METRIC_FAMILIES = ("accuracy", "retrieval", "diversity")

_ACCURACY_KEYS = ("bleu4", "cider_d", "spice_lite", "clip_score", "ref_clip_score")
_DIVERSITY_KEYS = ("div_1", "div_2", "mbleu4", "self_cider")


def _parse_metric_families(spec: str) -> set[str]:
    if spec == "all":
        return set(METRIC_FAMILIES)
    families = set()
    for name in spec.split(","):
        name = name.strip()
        if name not in METRIC_FAMILIES:
            raise InputError(
                f"unknown metric family {name!r}; choose from "
                f"{', '.join(METRIC_FAMILIES)} or all"
            )
        families.add(name)
    return families


def _scalars_by_family(scalars: dict[str, float]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {f: {} for f in METRIC_FAMILIES}
    for name, val in scalars.items():
        if name in _ACCURACY_KEYS:
            out["accuracy"][name] = val
        elif name.startswith("recall_at_"):
            out["retrieval"][name] = val
        elif name in _DIVERSITY_KEYS:
            out["diversity"][name] = val
    return out


def _bar_chart_svg(
    scalars: dict[str, float], path: str, title: str = "evaluation summary"
) -> None:
    entries = sorted(scalars.items())
    bar_h, gap, left, span = 22, 8, 190, 400
    height = 40 + len(entries) * (bar_h + gap)
    vmax = max([v for _, v in entries] + [1.0])
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + span + 100}" '
        f'height="{height}" font-family="monospace" font-size="12">',
        f'<text x="16" y="20">{title}</text>',
    ]
    y = 36
    for name, val in entries:
        w = max(0.0, val) / vmax * span
        ty = y + bar_h - 7
        parts.append(f'<text x="{left - 8}" y="{ty}" text-anchor="end">{name}</text>')
        parts.append(f'<rect x="{left}" y="{y}" width="{w:.1f}" height="{bar_h}" fill="#4477aa"/>')
        parts.append(f'<text x="{left + w + 6:.1f}" y="{ty}">{val:.4f}</text>')
        y += bar_h + gap
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def cmd_eval(args) -> int:
    seed = _resolve_seed(args.seed)
    records = read_enriched(args.enriched)
    if not records:
        raise InputError(f"{args.enriched}: no records")
    corpus = _select_split(load_corpus(args.captions, args.split), args.use_split)
    refs_text = {cs.image_id: cs.captions for cs in corpus}
    table = load_embeddings(args.embeddings)
    try:
        ks = tuple(int(k) for k in args.ks.split(","))
    except ValueError:
        raise InputError(f"--ks must be comma-separated integers, got {args.ks!r}")
    families = _parse_metric_families(args.metrics)

    groups: dict[str, list[EnrichedRecord]] = {}
    for rec in records:
        groups.setdefault(rec.image_id, []).append(rec)
    missing = [iid for iid in groups if iid not in refs_text]
    if missing:
        raise InputError(f"eval: no reference captions for ids {sorted(missing)}")

    # one representative candidate per image: highest sim_gain, first on ties
    best: dict[str, EnrichedRecord] = {
        iid: max(lines, key=lambda r: r.sim_gain) for iid, lines in groups.items()
    }

    cand_tokens = {iid: tokenize(rec.enriched) for iid, rec in best.items()}
    ref_tokens = {iid: [tokenize(c) for c in refs_text[iid]] for iid in groups}

    report = MetricReport()
    queries = []
    if families & {"accuracy", "retrieval"}:
        if "accuracy" in families:
            per_cider, mean_cider = cider_d(cand_tokens, ref_tokens)
        for iid in best:
            image_vec = table.vec(iid)
            cand_vec = toy_text_embed(cand_tokens[iid], dim=table.dim, seed=seed)
            queries.append((cand_vec, iid))
            if "accuracy" not in families:
                continue
            ref_vecs = [
                toy_text_embed(r, dim=table.dim, seed=seed) for r in ref_tokens[iid]
            ]
            report.per_image[iid] = {
                "bleu4": bleu4(cand_tokens[iid], ref_tokens[iid]),
                "cider_d": per_cider[iid],
                "spice_lite": spice_lite(cand_tokens[iid], ref_tokens[iid]),
                "clip_score": clip_score(image_vec, cand_vec),
                "ref_clip_score": ref_clip_score(image_vec, cand_vec, ref_vecs),
            }

    n = len(best)
    if "accuracy" in families:
        for key in ("bleu4", "spice_lite", "clip_score", "ref_clip_score"):
            report.add(key, sum(report.per_image[i][key] for i in best) / n)
        report.add("cider_d", mean_cider)

    if "retrieval" in families:
        pool = load_pool(args.pool) if args.pool else build_naive_pool(table, sorted(groups))
        for k, val in mean_recall(queries, pool, ks).items():
            report.add(f"recall_at_{k}", val)

    multi = {iid: lines for iid, lines in groups.items() if len(lines) >= 2}
    if "diversity" in families and multi:
        toks = {iid: [tokenize(r.enriched) for r in lines] for iid, lines in multi.items()}
        report.add("div_1", sum(div_n(t, 1) for t in toks.values()) / len(multi))
        report.add("div_2", sum(div_n(t, 2) for t in toks.values()) / len(multi))
        report.add("mbleu4", sum(mbleu4(t) for t in toks.values()) / len(multi))
        report.add("self_cider", sum(self_cider(t) for t in toks.values()) / len(multi))
    report.add("n_images", float(n))
    report.add("n_diversity_images", float(len(multi)))

    write_report_json(report, args.out_json)
    if args.out_csv:
        write_report_csv(report, args.out_csv)
    if args.svg:
        _bar_chart_svg(report.scalars, args.svg)
    if args.svg_dir:
        os.makedirs(args.svg_dir, exist_ok=True)
        for family, values in _scalars_by_family(report.scalars).items():
            if values:
                _bar_chart_svg(
                    values, os.path.join(args.svg_dir, f"{family}.svg"), title=family
                )
    for name in sorted(report.scalars):
        print(f"{name} {report.scalars[name]:.6f}")
    return 0


# ------------------------------------------------------------- the parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capenrich",
        description="Desk-scale caption enrichment pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-data", help="mine generic+detail samples from captions")
    p.add_argument("--captions", required=True, help="captions JSON (images/annotations)")
    p.add_argument("--split", help="split JSON (image id -> train/val/test)")
    p.add_argument("--use-split", default="train", choices=(*SPLITS, "all"))
    p.add_argument("--max-details", type=int, default=3)
    p.add_argument("--out", required=True, help="output samples JSONL")
    p.set_defaults(func=cmd_build_data)

    p = sub.add_parser("gen-prompts", help="instantiate prompt templates")
    p.add_argument("--set", default="diverse", choices=("base", "diverse"))
    p.add_argument("--templates", help="JSON template file overriding --set")
    p.add_argument("--generic", help="one generic caption")
    p.add_argument("--samples", help="samples JSONL to pull generics from")
    p.add_argument("--out", help="output JSONL (stdout for --generic without it)")
    p.set_defaults(func=cmd_gen_prompts)

    p = sub.add_parser("make-embeddings", help="toy image embeddings to EMB1")
    p.add_argument("--captions", required=True)
    p.add_argument("--split")
    p.add_argument("--use-split", default="all", choices=(*SPLITS, "all"))
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_embeddings)

    p = sub.add_parser("train", help="prompt-tune or fine-tune the decoder")
    p.add_argument("--samples", required=True, help="training samples JSONL")
    p.add_argument("--embeddings", required=True, help="EMB1 image embeddings")
    p.add_argument("--mode", default="prompt_only", choices=("prompt_only", "full"))
    p.add_argument("--kind", default="all", choices=("all", *KINDS))
    p.add_argument("--captions", help="captions JSON to build the vocabulary from")
    p.add_argument("--split", help="split JSON used with --captions")
    p.add_argument("--ckpt-in", help="checkpoint to start from (fixes vocab/config)")
    p.add_argument("--out", required=True, help="output checkpoint (TLM1)")
    p.add_argument("--prompt-name", default="lp-0")
    p.add_argument("--num-prompts", type=int, default=2, help="prompt vector count")
    p.add_argument("--prompt-init", default="random", choices=("random", "word"))
    p.add_argument("--prompt-words", help="words for --prompt-init word")
    p.add_argument("--lr", type=float, default=None,
                   help="default 3e-4 prompt_only, 3e-6 full")
    p.add_argument("--batch-size", type=int, default=48)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--d-ffn", type=int, default=128)
    p.add_argument("--max-seq", type=int, default=64)
    p.add_argument("--n-visual", type=int, default=4)
    p.add_argument("--val-samples", help="validation samples JSONL for best-checkpoint R@1")
    p.add_argument("--val-beam", type=int, default=1)
    p.add_argument("--max-new", type=int, default=12,
                   help="decode budget for validation scoring")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enrich", help="generate and filter enriched captions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--samples", help="samples JSONL supplying image ids + generics")
    p.add_argument("--generics", help="JSONL of {image_id, generic}")
    p.add_argument("--out", required=True)
    p.add_argument("--prompt-name", default="all",
                   help="checkpoint prompt tables to decode with: a name, "
                        "a comma list of names, or all")
    p.add_argument("--use-templates", action="store_true",
                   help="condition on text templates instead of prompt tables")
    p.add_argument("--set", default="diverse", choices=("base", "diverse"))
    p.add_argument("--templates", help="JSON template file overriding --set")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-new", type=int, default=12)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--emit", default="best", choices=("best", "survivors"))
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("build-hard-pool", help="curate hard retrieval distractors")
    p.add_argument("--target-embeddings", required=True)
    p.add_argument("--reservoir-embeddings", required=True)
    p.add_argument("--captions", required=True, help="captions for the target images")
    p.add_argument("--split")
    p.add_argument("--per-target", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output pool JSON")
    p.set_defaults(func=cmd_build_hard_pool)

    p = sub.add_parser("eval", help="score enriched captions")
    p.add_argument("--enriched", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--split")
    p.add_argument("--use-split", default="all", choices=(*SPLITS, "all"))
    p.add_argument("--embeddings", required=True)
    p.add_argument("--pool", help="retrieval pool JSON (default: naive pool)")
    p.add_argument("--ks", default="1,5,10")
    p.add_argument(
        "--metrics",
        default="all",
        help="comma list of metric families to compute: accuracy,retrieval,diversity",
    )
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-csv")
    p.add_argument("--svg", help="combined bar chart of every scalar")
    p.add_argument("--svg-dir", help="directory for one bar chart per metric family")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface.

Subcommands: synth (generate the keyword corpus), train, eval, probe
(dump importance labels), sweep (gamma sensitivity grid), explain
(per-token report + heatmap for one sentence).

Exit codes: 0 success, 2 config or usage error, 3 non-finite loss.
Every file output lands under the --out directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import CheckpointError, load_checkpoint, restore_model, save_checkpoint
from .corpus import (
    CorpusError,
    SynthSpec,
    Vocabulary,
    encode_sentence,
    load_tsv,
    synth_generate,
    synth_spec_from_file,
    synth_spec_to_file,
    tokenize,
)
from .encoder import special_token_mask
from .probing import ProbeConfig, dump_labels, generate_epoch_labels
from .training import (
    ConfigError,
    build_run_config,
    co_train,
    evaluate,
    parse_config_items,
    reports_to_csv,
)
from .viz import svg_line_plot, svg_token_heatmap

SWEEP_MODES = ("mask_augment", "ssa_co", "ssa_hybrid")


class UsageError(ValueError):
    pass


# ------------------------------------------------------------------ helpers


def _config_items(args) -> dict:
    items = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            items.update(parse_config_items(f))
    for pair in getattr(args, "set", None) or []:
        items.update(parse_config_items([pair]))
    if getattr(args, "seed", None) is not None:
        items["seed"] = args.seed
    return items


def _load_vocab(data_dir) -> Vocabulary:
    return Vocabulary.load(Path(data_dir) / "vocab.txt")


def _load_split(data_dir, split: str, vocab: Vocabulary):
    if split not in ("train", "dev", "test"):
        raise UsageError(f"unknown split {split!r}")
    return load_tsv(Path(data_dir) / f"{split}.tsv", "single", vocab)


def _check_vocab_hash(ckpt, vocab: Vocabulary):
    want = ckpt.extras.get("vocab_hash")
    got = vocab.content_hash()
    if want is not None and want != got:
        raise ConfigError(f"vocabulary hash mismatch: checkpoint has {want}, "
                          f"dataset has {got}")


def _ckpt_pool_mode(ckpt) -> str:
    return "hybrid" if ckpt.extras.get("mode") == "ssa_hybrid" else "cls"


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sentence_text(example, vocab: Vocabulary) -> str:
    return " ".join(vocab.decode_id(int(i)) for i in example.token_ids[1:-1])


def _write_split_tsv(path, examples, vocab):
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(f"{_sentence_text(ex, vocab)}\t{ex.target_label}\n")


# ----------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    spec = synth_spec_from_file(args.spec) if args.spec else SynthSpec()
    overrides = {}
    field_types = {f.name: f.type for f in dataclasses.fields(SynthSpec)}
    for pair in args.set or []:
        if "=" not in pair:
            raise UsageError(f"expected key=value, got {pair!r}")
        key, _, val = pair.partition("=")
        key = key.strip()
        if key not in field_types:
            raise UsageError(f"unknown corpus key {key!r}")
        t = field_types[key]
        overrides[key] = (int(val) if t == "int" else float(val) if t == "float"
                          else tuple(val.split(",")))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        spec = dataclasses.replace(spec, **overrides)

    corpus = synth_generate(spec)
    out = _out_dir(args)
    corpus.vocab.save(out / "vocab.txt")
    synth_spec_to_file(spec, out / "spec.txt")
    for name, split in (("train", corpus.train), ("dev", corpus.dev),
                        ("test", corpus.test)):
        _write_split_tsv(out / f"{name}.tsv", split, corpus.vocab)
    with open(out / "gold_test.tsv", "w", encoding="utf-8") as f:
        for i, ex in enumerate(corpus.test):
            pos = ex.gold_keyword_positions[0]
            f.write(f"{i}\t{pos}\t{corpus.vocab.decode_id(int(ex.token_ids[pos]))}\n")
    print(f"wrote {len(corpus.train)}/{len(corpus.dev)}/{len(corpus.test)} "
          f"examples, vocab {len(corpus.vocab)} (hash {corpus.vocab.content_hash()})")
    return 0


def cmd_train(args) -> int:
    cfg = build_run_config(_config_items(args))
    vocab = _load_vocab(args.data)
    cfg.encoder = dataclasses.replace(cfg.encoder, vocab_size=len(vocab))
    train_set = _load_split(args.data, "train", vocab)
    dev_set = _load_split(args.data, "dev", vocab)

    res = co_train(cfg, train_set, dev_set, n_workers=args.workers,
                   split_dev=args.split_dev)

    out = _out_dir(args)
    extras = {"vocab_hash": vocab.content_hash(), "mode": cfg.mode}
    save_checkpoint(out / "model.ckpt", res.model, cfg.seed, cfg.epochs - 1, extras)
    save_checkpoint(out / "best.ckpt", res.best_model, cfg.seed, res.best_epoch, extras)
    with open(out / "epochs.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write(reports_to_csv(res.reports))
    dump_labels(res.last_labels, out / "labels.dump")

    last = res.reports[-1]
    print(f"mode={cfg.mode} epochs={cfg.epochs} final dev_acc={last.dev_acc:.4f} "
          f"best_epoch={res.best_epoch}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    vocab = _load_vocab(args.data)
    _check_vocab_hash(ckpt, vocab)
    model = restore_model(ckpt)
    data = _load_split(args.data, args.split, vocab)
    m = evaluate(model, data, _ckpt_pool_mode(ckpt))
    print(f"split={args.split} n={len(data)} acc={m['acc']:.6f} "
          f"mcc={m['mcc']:.6f} f1={m['f1']:.6f}")
    return 0


def cmd_probe(args) -> int:
    if args.gamma <= 0:
        raise UsageError(f"gamma must be positive, got {args.gamma}")
    ckpt = load_checkpoint(args.ckpt)
    vocab = _load_vocab(args.data)
    _check_vocab_hash(ckpt, vocab)
    model = restore_model(ckpt)
    data = _load_split(args.data, args.split, vocab)
    probe_cfg = ProbeConfig(mask_ratio=args.mask_ratio, gamma=args.gamma,
                            rng_seed=args.seed if args.seed is not None else ckpt.seed)
    labels = generate_epoch_labels(model, data, probe_cfg, epoch=0,
                                   mode=_ckpt_pool_mode(ckpt),
                                   n_workers=args.workers)
    out = _out_dir(args)
    dump_labels(labels, out / "labels.dump")
    print(f"n_generated={len(labels)}")
    return 0


def cmd_sweep(args) -> int:
    if not args.gammas.strip():
        raise UsageError("empty gamma list")
    try:
        gammas = [float(g) for g in args.gammas.split(",") if g.strip()]
    except ValueError:
        raise UsageError(f"bad --gammas value {args.gammas!r}") from None
    if not gammas or any(g <= 0 for g in gammas):
        raise UsageError("gammas must be a nonempty list of positive numbers")
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in SWEEP_MODES]
    if bad or not modes:
        raise UsageError(f"sweep modes must be a nonempty subset of {SWEEP_MODES}, "
                         f"got {modes}")

    items = _config_items(args)
    base_seed = items.get("seed", 0)
    vocab = _load_vocab(args.data)
    train_set = _load_split(args.data, "train", vocab)
    dev_set = _load_split(args.data, "dev", vocab)

    grid = [(mode, gamma, base_seed + k)
            for mode in modes for gamma in gammas for k in range(args.seeds)]

    def run_cell(cell):
        mode, gamma, seed = cell
        cell_items = dict(items, mode=mode, gamma=gamma, seed=seed)
        cfg = build_run_config(cell_items)
        cfg.encoder = dataclasses.replace(cfg.encoder, vocab_size=len(vocab))
        res = co_train(cfg, train_set, dev_set)
        return res.reports[-1].dev_acc

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            accs = list(pool.map(run_cell, grid))
    else:
        accs = [run_cell(c) for c in grid]

    out = _out_dir(args)
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("gamma,mode,seed,dev_acc\n")
        for (mode, gamma, seed), acc in zip(grid, accs):
            f.write(f"{gamma:g},{mode},{seed},{acc!r}\n")

    series = {}
    for mode in modes:
        pts = []
        for gamma in gammas:
            vals = [acc for (m, g, _), acc in zip(grid, accs)
                    if m == mode and g == gamma]
            pts.append((gamma, float(np.mean(vals))))
        series[mode] = pts
    with open(out / "sweep.svg", "w", encoding="utf-8", newline="\n") as f:
        f.write(svg_line_plot(series, title="dev accuracy vs generation ratio",
                              xlabel="gamma", ylabel="dev accuracy"))
    print(f"rows={len(grid)}")
    return 0


def cmd_explain(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    vocab = _load_vocab(args.data)
    _check_vocab_hash(ckpt, vocab)
    model = restore_model(ckpt)

    tokens = tokenize(args.sentence)
    ids, segs = encode_sentence(vocab, tokens)
    if len(ids) > model.config.max_len:
        raise ConfigError(f"sentence has {len(ids)} tokens with specials, "
                          f"model max_len is {model.config.max_len}")
    out_enc = model.encode(ids, segs, np.ones(len(ids), dtype=bool))

    last = out_enc.attention_maps[-1]            # (heads, n, n)
    received = last.mean(axis=1)                 # mean over query positions
    probs = model.ssa_scores(out_enc.token_reprs).data[:, 1]
    sm = special_token_mask(ids)
    weights = model.pooling_weights(
        T.reshape(model.ssa_logits(out_enc.token_reprs)[:, 1], (1, len(ids))),
        sm[None, :]).data[0]

    pool_mode = _ckpt_pool_mode(ckpt)
    if pool_mode == "hybrid":
        importance = model.ssa_logits(out_enc.token_reprs)[:, 1]
        pooled = model.hybrid_pool(out_enc.cls_repr, out_enc.token_reprs,
                                   importance, sm)
    else:
        pooled = out_enc.cls_repr
    logits = model.classify(pooled).data
    shifted = np.exp(logits - logits.max())
    conf = shifted / shifted.sum()
    pred = int(np.argmax(logits))

    n_heads = received.shape[0]
    display = [vocab.decode_id(int(i)) for i in ids]
    head_cols = "  ".join(f"attn_h{h}" for h in range(n_heads))
    print(f"{'token':<12} {head_cols}  ssa_prob  pool_w")
    for j, tok in enumerate(display):
        attn = "  ".join(f"{received[h, j]:7.3f}" for h in range(n_heads))
        print(f"{tok:<12} {attn}  {probs[j]:8.3f}  {weights[j]:6.3f}")
    print(f"label={pred} confidence={conf[pred]:.3f}")

    rows = {f"attn head {h}": received[h] for h in range(n_heads)}
    rows["ssa probability"] = probs
    rows["pooling weight"] = weights
    out = _out_dir(args)
    with open(out / "explain.svg", "w", encoding="utf-8", newline="\n") as f:
        f.write(svg_token_heatmap(display, rows, title=args.sentence))
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssattn",
                                description="masking-probe co-training toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False, data=False, outdir=False, ckpt=False):
        if config:
            sp.add_argument("--config", help="key=value run config file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override a config key (repeatable)")
        if data:
            sp.add_argument("--data", required=True,
                            help="corpus directory (train/dev/test.tsv + vocab.txt)")
        if outdir:
            sp.add_argument("--out", required=True, help="output directory")
        if ckpt:
            sp.add_argument("--ckpt", required=True, help="checkpoint file")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("synth", help="generate the synthetic keyword corpus")
    sp.add_argument("--spec", help="corpus spec key=value file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    common(sp, outdir=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a model")
    common(sp, config=True, data=True, outdir=True)
    sp.add_argument("--workers", type=int, default=1,
                    help="probe forwards in parallel (results identical)")
    sp.add_argument("--split-dev", action="store_true",
                    help="select best epoch on three dev slices (mean - std)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp, data=True, ckpt=True)
    sp.add_argument("--split", default="test", choices=("train", "dev", "test"))
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("probe", help="dump decision-flip labels")
    common(sp, data=True, outdir=True, ckpt=True)
    sp.add_argument("--split", default="train", choices=("train", "dev", "test"))
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--mask-ratio", type=float, default=0.3)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("sweep", help="gamma sensitivity grid")
    common(sp, config=True, data=True, outdir=True)
    sp.add_argument("--gammas", required=True, help="comma-separated gamma list")
    sp.add_argument("--modes", default=",".join(SWEEP_MODES))
    sp.add_argument("--seeds", type=int, default=3, help="seeds per cell")
    sp.add_argument("--workers", type=int, default=1,
                    help="grid cells in parallel; output order is fixed")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("explain", help="per-token report for one sentence")
    common(sp, data=True, outdir=True, ckpt=True)
    sp.add_argument("--sentence", required=True)
    sp.set_defaults(func=cmd_explain)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CorpusError, CheckpointError, UsageError,
            FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except T.NonFiniteError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

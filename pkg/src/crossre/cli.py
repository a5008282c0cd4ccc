"""Command-line entry point: ``python -m crossre <command> ...``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import torch

from . import __version__
from .config import RunConfig, apply_overrides, dump_config, load_config
from .corpus import CorpusError, load_corpus, validate_store
from .entity_filter import score_dump
from .model import make_similarity, path_context, prepare_bag, prepare_store
from .relation_attention import AttentionStack, node_labels
from .semantic_filter import FilterError
from .synthgen import SynthError, SynthSpec, write_synth
from .trainer import (
    TrainingError, apply_ablation, evaluate, load_checkpoint, prepare_and_train, save_checkpoint,
)

log = logging.getLogger("crossre")

DATA_ERRORS = (CorpusError, FilterError, SynthError, TrainingError, FileNotFoundError, json.JSONDecodeError)
VARIANTS = {"full": (), "-IC": ("IC",), "-BR": ("BR",), "-CP": ("CP",), "-TH": ("TH",)}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# ---------------------------------------------------------------- config plumbing

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (overrides --config)")
    g.add_argument("--config", help="key=value config file")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type is bool:
            g.add_argument(flag, dest=f.name, nargs="?", const="true", default=None, metavar="BOOL")
        else:
            g.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    flags = {f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)
             if getattr(args, f.name, None) is not None}
    try:
        return apply_overrides(cfg, flags)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _need(cfg, *names):
    missing = [n for n in names if not getattr(cfg, n)]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, cfg, argv, inputs, extra=None) -> dict:
    manifest = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "config": dataclasses.asdict(cfg),
        "seeds": {"global": cfg.seed, "derivation": "sha256(seed, bag_id, path_index)"},
        "inputs": {str(p): sha256_of(p) for p in inputs if p},
        "torch": torch.__version__,
    }
    if extra:
        manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    (out_dir / "config.txt").write_text(dump_config(cfg))
    return manifest


def _load(cfg, dev=False):
    if dev:
        if not cfg.dev_corpus:
            return None
        return load_corpus(cfg.dev_corpus, cfg.dev_bags, cfg.schema)
    _need(cfg, "corpus", "bags")
    return load_corpus(cfg.corpus, cfg.bags, cfg.schema)


def _inputs(cfg):
    return [cfg.corpus, cfg.bags, cfg.schema, cfg.embeddings, cfg.dev_corpus, cfg.dev_bags]


# ---------------------------------------------------------------- commands

def cmd_validate(args, out) -> int:
    store = load_corpus(args.corpus, args.bags, args.schema)
    report = validate_store(store)
    n = sum(len(v) for v in report.values())
    for bag_id, msgs in report.items():
        for m in msgs:
            print(f"{bag_id}: {m}", file=out)
    print(f"{n} violations", file=out)
    return 0 if n == 0 else 2


def cmd_filter(args, out) -> int:
    cfg = resolve_config(args)
    store = _load(cfg)
    if args.action == "score-dump":
        dump = [score_dump(b, store, cfg.filter_config()) for b in store.bags]
        print(json.dumps(dump, indent=1, sort_keys=True), file=out)
        return 0
    sim = None if cfg.no_ic else make_similarity(store, cfg, cfg.embeddings)
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    sink = open(args.output, "w", encoding="utf-8") if args.output else out
    try:
        for bag in store.bags:
            for i in range(len(bag.paths)):
                ctx = path_context(bag, i, store, cfg, sim)
                rec = {
                    "bag": bag.bag_id, "path": i,
                    "sentences": [dataclasses.asdict(s) for s in ctx.sentences],
                    "n_tokens": ctx.n_tokens, "tail_reached": ctx.tail_reached,
                    "truncated": ctx.truncated, "flags": ctx.flags,
                }
                sink.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if sink is not out:
            sink.close()
    if args.output:
        write_manifest(Path(args.output).parent, "filter", cfg, args.argv, _inputs(cfg))
    return 0


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition("..")
    try:
        return int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO..HI, got {text!r}") from None


def cmd_gen_synth(args, out) -> int:
    spec = SynthSpec(
        n_relations=args.relations, bags_per_relation=args.bags_per_relation, na_bags=args.na_bags,
        paths_per_bag=args.paths, bridges_per_path=args.bridges, noise_sentences=args.noise_sentences,
        vocab_size=args.vocab_size, mode=args.mode, seed=args.seed, prefix=args.prefix,
    )
    store, manifest = write_synth(spec, args.out)
    print(f"wrote {len(store.bags)} bags, {len(store.documents)} documents to {args.out}", file=out)
    return 0


def cmd_train(args, out) -> int:
    cfg = resolve_config(args)
    store = _load(cfg)
    dev = _load(cfg, dev=True)
    out_dir = Path(cfg.out)
    t0 = time.perf_counter()
    res, vocab = prepare_and_train(store, cfg, dev, cfg.embeddings)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "model.ckpt", res.model, vocab, store.schema.relations, res.history)
    (out_dir / "history.json").write_text(json.dumps(res.history, indent=1, sort_keys=True) + "\n")
    write_manifest(out_dir, "train", cfg, args.argv, _inputs(cfg),
                   {"wall_time_s": round(time.perf_counter() - t0, 3)})
    last = res.history[-1]
    print(json.dumps({"epochs": len(res.history), "loss": last["loss"],
                      **last.get("dev", last.get("train", {}))}, sort_keys=True), file=out)
    return 0


def cmd_eval(args, out) -> int:
    model, vocab, relations, _ = load_checkpoint(args.checkpoint)
    store = load_corpus(args.corpus, args.bags, args.schema)
    if tuple(store.schema.relations) != tuple(relations):
        raise DataError("relation schema differs from the checkpoint's")
    cfg = model.cfg
    bags = prepare_store(store, vocab, cfg, args.embeddings)
    p_at = tuple(int(x) for x in args.p_at.split(","))
    metrics = evaluate(model, bags, relations, p_at, average_p=args.average_p)
    keep = ["f1", "auc"] + [f"p@{n}" for n in p_at] + ["n_bags", "n_facts"]
    text = json.dumps({k: metrics[k] for k in keep}, sort_keys=False)
    print(text, file=out)
    if args.output:
        Path(args.output).write_text(text + "\n")
    return 0


def run_ablation(cfg, store, dev, variants=tuple(VARIANTS), embeddings=None) -> list[dict]:
    rows = []
    for name in variants:
        vcfg = apply_ablation(cfg, *VARIANTS[name])
        res, vocab = prepare_and_train(store, vcfg, dev, embeddings)
        target = dev if dev is not None else store
        m = evaluate(res.model, prepare_store(target, vocab, vcfg), target.schema.relations)
        rows.append({"variant": name, "f1": m["f1"], "auc": m["auc"]})
    return rows


def cmd_ablate(args, out) -> int:
    cfg = resolve_config(args)
    store = _load(cfg)
    dev = _load(cfg, dev=True)
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise UsageError(f"unknown variant(s) {unknown}; choose from {list(VARIANTS)}")
    rows = run_ablation(cfg, store, dev, variants, cfg.embeddings)
    print("variant\tf1\tauc", file=out)
    for r in rows:
        print(f"{r['variant']}\t{r['f1']:.4f}\t{r['auc']:.4f}", file=out)
    out_dir = Path(cfg.out)
    write_manifest(out_dir, "ablate", cfg, args.argv, _inputs(cfg))
    (out_dir / "ablation.json").write_text(json.dumps(rows, indent=1) + "\n")
    return 0


def attention_rows(model, pb, per_head=False) -> list[dict]:
    out = model(pb, return_attention=True)
    labels = node_labels(out.matrix.nodes)
    n = len(labels)
    w = out.attention[-1].detach().double()  # heads x n^2 x n^2
    maps = [(str(h), w[h]) for h in range(w.shape[0])] if per_head else [("mean", w.mean(0))]
    rows = []
    for _, h, t in out.matrix.target_index():
        q = h * n + t
        for head, mat in maps:
            for k in range(n * n):
                u, v = divmod(k, n)
                rows.append({"bag": pb.bag_id, "head": head, "query": f"{labels[h]},{labels[t]}",
                             "key_u": labels[u], "key_v": labels[v], "weight": float(mat[q, k])})
    return rows


def cmd_dump_attention(args, out) -> int:
    model, vocab, relations, _ = load_checkpoint(args.checkpoint)
    store = load_corpus(args.corpus, args.bags, args.schema)
    bags = store.bags if not args.bag else [b for b in store.bags if b.bag_id in set(args.bag)]
    if args.bag and not bags:
        raise DataError(f"no bag matches {args.bag}")
    sim = None if model.cfg.no_ic else make_similarity(store, model.cfg)
    sink = open(args.output, "w", newline="", encoding="utf-8") if args.output else out
    try:
        writer = csv.DictWriter(sink, ["bag", "head", "query", "key_u", "key_v", "weight"])
        writer.writeheader()
        model.eval()
        with torch.no_grad():
            for bag in bags:
                pb = prepare_bag(bag, store, vocab, model.cfg, sim)
                if pb.paths:
                    writer.writerows(attention_rows(model, pb, args.per_head))
    finally:
        if sink is not out:
            sink.close()
    return 0


def bench_attention(bridges, paths=4, d=64, layers=1, repeats=3, seed=0) -> list[dict]:
    """Wall time of the attention stack over the flattened relation matrix per bridge count."""
    torch.set_num_threads(1)
    torch.manual_seed(seed)
    stack = AttentionStack(d, layers)
    rows = []
    with torch.no_grad():
        for b in bridges:
            n = paths * (2 + b)
            x = torch.randn(n * n, d)
            stack(x)  # warm-up
            best = float("inf")
            for _ in range(repeats):
                t = time.perf_counter()
                stack(x)
                best = min(best, time.perf_counter() - t)
            scores = stack.blocks[0].attn.scores(stack.blocks[0].ln1(x))
            rows.append({"bridges": b, "nodes": n, "flat_rows": n * n,
                         "score_count": scores.shape[-1] * scores.shape[-2], "wall_time_s": best})
    return rows


def cmd_bench_attn(args, out) -> int:
    rows = bench_attention(range(args.max_bridges[0], args.max_bridges[1] + 1), args.paths, args.d,
                           args.layers, args.repeats)
    writer = csv.DictWriter(out, ["bridges", "nodes", "flat_rows", "score_count", "wall_time_s"])
    writer.writeheader()
    for r in rows:
        writer.writerow({**r, "wall_time_s": f"{r['wall_time_s']:.6f}"})
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crossre", description="Cross-document relation extraction over text paths.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    v = sub.add_parser("validate", help="check corpus and bags")
    v.add_argument("--corpus", required=True)
    v.add_argument("--bags", required=True)
    v.add_argument("--schema")

    f = sub.add_parser("filter", help="emit filtered contexts as JSONL")
    f.add_argument("action", nargs="?", choices=["contexts", "score-dump"], default="contexts")
    f.add_argument("-o", "--output")
    _add_config_flags(f)

    g = sub.add_parser("gen-synth", help="write a synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--relations", type=int, default=2)
    g.add_argument("--bags-per-relation", type=int, default=10)
    g.add_argument("--na-bags", type=int, default=10)
    g.add_argument("--paths", type=_range, default=(1, 3), metavar="LO..HI")
    g.add_argument("--bridges", type=_range, default=(1, 3), metavar="LO..HI")
    g.add_argument("--noise-sentences", type=_range, default=(26, 34), metavar="LO..HI")
    g.add_argument("--vocab-size", type=int, default=600)
    g.add_argument("--mode", choices=["within-path", "cross-path-only"], default="within-path")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--prefix", default="")

    t = sub.add_parser("train", help="train a model")
    _add_config_flags(t)

    e = sub.add_parser("eval", help="score a checkpoint on a corpus")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--bags", required=True)
    e.add_argument("--schema")
    e.add_argument("--embeddings")
    e.add_argument("--p-at", default="500,1000")
    e.add_argument("--average-p", action="store_true", help="prefix-averaged precision instead of cutoff")
    e.add_argument("-o", "--output")

    a = sub.add_parser("ablate", help="full model and the four ablations")
    a.add_argument("--variants", help="comma list out of full,-IC,-BR,-CP,-TH")
    _add_config_flags(a)

    d = sub.add_parser("dump-attention", help="last-layer attention of target cells as CSV")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--corpus", required=True)
    d.add_argument("--bags", required=True)
    d.add_argument("--schema")
    d.add_argument("--bag", action="append", help="restrict to this bag id (repeatable)")
    d.add_argument("--per-head", action="store_true")
    d.add_argument("-o", "--output")

    b = sub.add_parser("bench-attn", help="attention cost sweep over bridge counts")
    b.add_argument("--max-bridges", type=_range, default=(2, 8), metavar="LO..HI")
    b.add_argument("--paths", type=int, default=4)
    b.add_argument("--d", type=int, default=64)
    b.add_argument("--layers", type=int, default=1)
    b.add_argument("--repeats", type=int, default=3)
    return p


COMMANDS = {
    "validate": cmd_validate, "filter": cmd_filter, "gen-synth": cmd_gen_synth, "train": cmd_train,
    "eval": cmd_eval, "ablate": cmd_ablate, "dump-attention": cmd_dump_attention, "bench-attn": cmd_bench_attn,
}


def main(argv=None, out=None, err=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        args.argv = argv
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args, out)
    except UsageError as e:
        print(str(e).rstrip(), file=err)
        return 1
    except (DataError, *DATA_ERRORS) as e:
        print(f"error: {e}", file=err)
        return 2
    except ValueError as e:  # bad values inside otherwise well-formed input
        print(f"error: {e}", file=err)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Every flag can be supplied through an environment variable named
HIEROLM_<FLAG> (long flag name, upper-cased, dashes to underscores).
Precedence: explicit flag > environment > config file > built-in default.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import evaluation, synth
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    Vocabulary,
    corpus_stats,
    encode_split,
    join_tokens,
    read_corpus,
    split_dataset,
    tokenize_line,
)
from .service import ModelBundle, serve
from .training import TrainConfig, sweep, train


def _arg(parser, *flags, cast=None, default=None, **kwargs):
    """add_argument with an HIEROLM_<FLAG> environment fallback.

    The argparse default is always None; _resolve() fills in the
    environment value or the declared default afterwards, so an explicit
    flag always wins over the environment.
    """
    long = next(f for f in flags if f.startswith("--"))
    env_name = "HIEROLM_" + long.lstrip("-").upper().replace("-", "_")
    action = kwargs.get("action")
    if action == "store_true":
        kwargs["default"] = None
        parsed = parser.add_argument(*flags, **kwargs)
        cast = _env_bool
    else:
        parsed = parser.add_argument(*flags, default=None, **kwargs)
        cast = cast or kwargs.get("type") or str
    if not hasattr(parser, "_env_fallbacks"):
        parser._env_fallbacks = []
    parser._env_fallbacks.append((parsed.dest, env_name, cast, default))
    return parsed


def _env_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def _resolve(parser, args):
    for dest, env_name, cast, default in getattr(parser, "_env_fallbacks", []):
        if getattr(args, dest, None) is None:
            raw = os.environ.get(env_name)
            if raw is not None:
                try:
                    setattr(args, dest, cast(raw))
                except ValueError as exc:
                    parser.error(f"{env_name}={raw!r}: {exc}")
            else:
                setattr(args, dest, default)
    return args


def _load_toml(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _ratio_triple(text: str):
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) == 0:
        raise ValueError(f"ratios must be three non-negative integers, got {text!r}")
    return tuple(parts)


_TRAIN_FLAG_FIELDS = (
    # (flags, dest/config field, cast)
    (("--arch",), "architecture", str),
    (("--embed-size", "-s"), "embed_size", int),
    (("--hidden-size", "-d"), "hidden_size", int),
    (("--dropout",), "dropout", float),
    (("--batch-size",), "batch_size", int),
    (("--lr",), "initial_lr", float),
    (("--optimizer",), "optimizer", str),
    (("--patience",), "patience_epochs", int),
    (("--decay-factor",), "decay_factor", float),
    (("--max-decays",), "max_decays", int),
    (("--clip",), "grad_clip_norm", float),
    (("--max-epochs",), "max_epochs", int),
    (("--seed",), "seed", int),
)


def _add_train_flags(parser):
    for flags, dest, cast in _TRAIN_FLAG_FIELDS:
        _arg(parser, *flags, dest=dest, type=cast)
    _arg(parser, "--config", help="TOML file of training settings")


def _build_train_config(parser, args) -> TrainConfig:
    file_cfg = _load_toml(args.config) if args.config else {}
    valid = {f.name for f in dataclass_fields(TrainConfig)}
    unknown = set(file_cfg) - valid
    if unknown:
        parser.error(f"config file: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name in valid:
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            kwargs[name] = cli_val
        elif name in file_cfg:
            kwargs[name] = file_cfg[name]
    try:
        return TrainConfig(**kwargs)
    except ValueError as exc:
        parser.error(str(exc))


def _prepare_corpus(args):
    sentences = read_corpus(args.corpus)
    split = split_dataset(sentences, ratios=args.ratios, seed=args.split_seed)
    vocab = Vocabulary.build(split.train, min_count=args.min_count)
    return sentences, split, vocab, encode_split(split, vocab)


def _add_corpus_flags(parser):
    _arg(parser, "--corpus", required=False, help="one MdC sentence per line")
    _arg(parser, "--ratios", cast=_ratio_triple, type=_ratio_triple,
         default=(8, 1, 1), help="train,val,test ratio (default 8,1,1)")
    _arg(parser, "--split-seed", type=int, default=0)
    _arg(parser, "--min-count", type=int, default=1,
         help="drop vocabulary tokens rarer than this")


# -- subcommand implementations ----------------------------------------------

def _cmd_train(parser, args):
    args = _resolve(parser, args)
    if not args.corpus:
        parser.error("--corpus is required")
    config = _build_train_config(parser, args)
    sentences, split, vocab, encoded = _prepare_corpus(args)
    stats = corpus_stats(sentences, vocab, split)
    print(json.dumps({"corpus": stats.as_dict()}), file=sys.stderr)

    stream = sys.stdout
    opened = None
    if args.metrics and args.metrics != "-":
        opened = open(args.metrics, "w", encoding="utf-8")
        stream = opened
    try:
        ckpt, state = train(config, encoded, vocab, metrics_stream=stream)
    finally:
        if opened:
            opened.close()
    save_checkpoint(args.out, ckpt)
    print(json.dumps({
        "checkpoint": str(args.out),
        "epochs": state.epoch,
        "best_epoch": state.best_epoch,
        "best_val_perplexity": state.best_val_perplexity,
        "decays": state.decay_count,
    }))
    return 0


def _cmd_eval(parser, args):
    args = _resolve(parser, args)
    if not args.ckpt or not args.corpus:
        parser.error("--ckpt and --corpus are required")
    ckpt = load_checkpoint(args.ckpt)
    vocab = ckpt.vocabulary()
    params = ckpt.to_params()
    sentences = read_corpus(args.corpus)
    if args.split == "all":
        rows = [vocab.encode(s) for s in sentences]
    else:
        split = split_dataset(sentences, ratios=args.ratios, seed=args.split_seed)
        rows = [vocab.encode(s) for s in getattr(split, args.split)]

    report = evaluation.evaluate(params, rows, include_eos=args.include_eos)
    shots = evaluation.multishot(params, rows, k_max=args.k_max)
    buckets = evaluation.length_buckets(params, rows, include_eos=args.include_eos)
    if args.json:
        print(json.dumps({
            "eval": report.as_dict(),
            "multishot": shots.as_dict(),
            "length_buckets": buckets.as_dict(),
        }, indent=2))
    else:
        print(evaluation.eval_report_text(report))
        print()
        print(evaluation.multishot_text(shots))
        print()
        print(evaluation.buckets_text(buckets))
    if args.pca:
        ids = list(range(4, min(vocab.size, 4 + args.pca_top)))
        proj = evaluation.pca_project(params.E.value, ids)
        Path(args.pca).write_text(evaluation.pca_csv(proj, vocab),
                                  encoding="utf-8")
        print(f"wrote PCA projection for {len(ids)} tokens to {args.pca}",
              file=sys.stderr)
    return 0


def _context_tokens(text):
    text = (text or "").strip()
    return tokenize_line(text) if text else []


def _cmd_predict(parser, args):
    args = _resolve(parser, args)
    if not args.ckpt:
        parser.error("--ckpt is required")
    bundle = ModelBundle.from_checkpoint_path(args.ckpt)
    from .service import handle_predict
    out = handle_predict(bundle, {"context": _context_tokens(args.context),
                                  "k": args.k})
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        for warning in out["warnings"]:
            print(warning, file=sys.stderr)
        rows = [[c["token"], c["probability"]] for c in out["candidates"]]
        print(evaluation.text_table(("token", "probability"), rows))
    return 0


def _cmd_complete(parser, args):
    args = _resolve(parser, args)
    if not args.ckpt:
        parser.error("--ckpt is required")
    bundle = ModelBundle.from_checkpoint_path(args.ckpt)
    from .service import handle_complete
    out = handle_complete(bundle, {"context": _context_tokens(args.context),
                                   "steps": args.steps})
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        for warning in out["warnings"]:
            print(warning, file=sys.stderr)
        print(join_tokens(out["generated"]) if out["generated"] else "(no tokens)")
        if out["terminated_by_eos"]:
            print("(end of sentence)", file=sys.stderr)
    return 0


def _cmd_sweep(parser, args):
    args = _resolve(parser, args)
    if not args.corpus or not args.grid:
        parser.error("--corpus and --grid are required")
    doc = _load_toml(args.grid)
    grid = doc.get("grid")
    if not isinstance(grid, dict) or not grid:
        parser.error("grid file needs a [grid] table with at least one axis")
    base_doc = doc.get("base", {})
    ns = argparse.Namespace(**{f.name: base_doc.get(f.name)
                               for f in dataclass_fields(TrainConfig)},
                            config=None)
    base = _build_train_config(parser, ns)
    _, _, vocab, encoded = _prepare_corpus(args)
    rows = sweep(base, grid, encoded, vocab,
                 metrics_stream=sys.stderr if args.verbose else None)
    text = json.dumps(rows, indent=2) if args.json else evaluation.sweep_text(rows)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def _cmd_serve(parser, args):
    args = _resolve(parser, args)
    if not args.ckpt:
        parser.error("--ckpt is required")
    serve(args.ckpt, args.addr, ui_dir=args.ui)
    return 0


def _cmd_repl(parser, args):
    args = _resolve(parser, args)
    if not args.ckpt:
        parser.error("--ckpt is required")
    from .repl import run_repl
    run_repl(ModelBundle.from_checkpoint_path(args.ckpt))
    return 0


def _cmd_synth(parser, args):
    args = _resolve(parser, args)
    if not args.spec:
        parser.error("--spec is required (TOML path or builtin name: "
                     + ", ".join(sorted(synth.BUILTIN_GRAMMARS)))
    if Path(args.spec).is_file():
        grammar = synth.load_grammar_toml(args.spec)
    elif args.spec in synth.BUILTIN_GRAMMARS:
        grammar = synth.BUILTIN_GRAMMARS[args.spec]()
    else:
        parser.error(f"--spec {args.spec!r} is neither a file nor a builtin "
                     f"({', '.join(sorted(synth.BUILTIN_GRAMMARS))})")
    sentences = grammar.sample(args.count, seed=args.seed)
    lines = "".join(join_tokens(s) + "\n" for s in sentences)
    if args.out and args.out != "-":
        Path(args.out).write_text(lines, encoding="utf-8")
        print(f"wrote {len(sentences)} sentences to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(lines)
    return 0


def build_parser():
    root = argparse.ArgumentParser(
        prog="hierolm",
        description="word-level language models for MdC transliterations")
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    _add_corpus_flags(p)
    _add_train_flags(p)
    _arg(p, "--out", default="model.ckpt")
    _arg(p, "--metrics", default="-",
         help="per-epoch JSON-lines stream (default stdout)")
    p.set_defaults(func=_cmd_train, parser=p)

    p = sub.add_parser("eval", help="metrics for a checkpoint on a corpus")
    _arg(p, "--ckpt")
    _add_corpus_flags(p)
    _arg(p, "--split", choices=("train", "validation", "test", "all"),
         default="test")
    _arg(p, "--k-max", type=int, default=4)
    _arg(p, "--include-eos", action="store_true", default=True)
    _arg(p, "--no-include-eos", dest="include_eos_off", action="store_true",
         default=False)
    _arg(p, "--json", action="store_true", default=False)
    _arg(p, "--pca", help="write embedding PCA CSV here")
    _arg(p, "--pca-top", type=int, default=500)
    p.set_defaults(func=_cmd_eval, parser=p)

    p = sub.add_parser("predict", help="top-k next tokens for a context")
    _arg(p, "--ckpt")
    _arg(p, "--context", default="")
    _arg(p, "-k", "--k", type=int, default=5)
    _arg(p, "--json", action="store_true", default=False)
    p.set_defaults(func=_cmd_predict, parser=p)

    p = sub.add_parser("complete", help="greedy continuation of a context")
    _arg(p, "--ckpt")
    _arg(p, "--context", default="")
    _arg(p, "--steps", type=int, default=4)
    _arg(p, "--json", action="store_true", default=False)
    p.set_defaults(func=_cmd_complete, parser=p)

    p = sub.add_parser("sweep", help="grid search over model settings")
    _add_corpus_flags(p)
    _arg(p, "--grid", help="TOML with [grid] axes and optional [base] settings")
    _arg(p, "--out", help="write the result table here instead of stdout")
    _arg(p, "--json", action="store_true", default=False)
    _arg(p, "--verbose", action="store_true", default=False)
    p.set_defaults(func=_cmd_sweep, parser=p)

    p = sub.add_parser("serve", help="HTTP inference service")
    _arg(p, "--ckpt")
    _arg(p, "--addr", default="127.0.0.1:8321")
    _arg(p, "--ui", help="directory of static UI files served under /ui")
    p.set_defaults(func=_cmd_serve, parser=p)

    p = sub.add_parser("repl", help="interactive prediction session")
    _arg(p, "--ckpt")
    p.set_defaults(func=_cmd_repl, parser=p)

    p = sub.add_parser("synth", help="sample sentences from a template grammar")
    _arg(p, "--spec", help="grammar TOML path or builtin name")
    _arg(p, "-n", "--count", type=int, default=1000)
    _arg(p, "--seed", type=int, default=0)
    _arg(p, "--out", default="-")
    p.set_defaults(func=_cmd_synth, parser=p)
    return root


def main(argv=None) -> int:
    root = build_parser()
    args = root.parse_args(argv)
    if getattr(args, "include_eos_off", False):
        args.include_eos = False
    return args.func(args.parser, args)


if __name__ == "__main__":
    sys.exit(main())

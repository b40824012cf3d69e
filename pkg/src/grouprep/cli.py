"""Command-line entry point: ``grouprep <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from grouprep import experiments as ex
from grouprep.data import (
    DatasetManifest,
    generate_from_manifest,
    read_jsonl,
    write_dataset,
)
from grouprep.matrixnet import MatrixNetModel
from grouprep.perm import word_order
from grouprep.train import (
    TrainConfig,
    config_from_dict,
    evaluate,
    load_model,
    train,
)
from grouprep.words import Braid, parse_family, parse_word
from grouprep.zigzag import BraidOracle


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("GROUPREP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"GROUPREP_SEED must be an integer, got {env!r}") from None


def _family(name: str):
    try:
        return parse_family(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(obj) -> None:
    print(json.dumps(obj))


# -- subcommands ----------------------------------------------------------------------


def cmd_gen_dataset(args) -> None:
    fam = _family(args.family)
    seed = _seed(args.seed)
    if isinstance(fam, Braid):
        if args.max_len is None:
            raise UsageError("--max-len is required")
        params = {"mode": args.mode, "length": args.max_len, "count": args.count or 0,
                  "start_vertex": args.start_vertex, "seed": seed, "raw": args.raw_words}
        if args.mode == "sample" and not args.count:
            raise UsageError("sample mode needs --count")
        task = "regression"
    else:
        if not args.count or args.max_len is None:
            raise UsageError("order datasets need --count and --max-len")
        params = {"count": args.count, "max_len": args.max_len, "seed": seed,
                  "include_identity": not args.no_identity}
        task = "classification"
    manifest = DatasetManifest(fam.name, task, params, 0)
    samples = generate_from_manifest(manifest)
    write_dataset(samples, args.out, manifest)
    _emit({"out": str(args.out), "count": manifest.count, "sha256": manifest.content_hash})


TRAIN_FLAGS = {
    # TrainConfig field -> argparse type
    "family": str, "task": str, "model": str, "variant": str, "matrix_dim": int,
    "channels": int, "block_hidden": int, "block_activation": str, "head_activation": str,
    "mlp_hidden": int, "mlp_activation": str, "max_len": int, "epochs": int,
    "batch_size": int, "lr": float, "relation_every": int, "relation_weight": float,
    "seed": int, "checkpoint": str, "history": str, "eval_every": int,
}


def _train_config(args) -> tuple[TrainConfig, dict]:
    values = ex.load_config_file(args.config) if args.config else {}
    for name in TRAIN_FLAGS:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    if args.head_hidden is not None:
        values["head_hidden"] = tuple(args.head_hidden)
    if args.no_relation_loss:
        values["relation_loss"] = False
    for k in ex.DATA_KEYS:
        v = getattr(args, k)
        if v is not None:
            values[k] = v
    paths = {k: values.pop(k) for k in ex.DATA_KEYS if k in values}
    values["seed"] = _seed(values.get("seed"))
    if "train" not in paths:
        raise UsageError("a training set is required (--train or train = ... in --config)")
    try:
        cfg = config_from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return cfg, paths


def cmd_train(args) -> None:
    cfg, paths = _train_config(args)
    fam = cfg.family_obj
    train_set = read_jsonl(paths["train"], fam)
    val_set = read_jsonl(paths["val"], fam) if "val" in paths else []
    if train_set and cfg.task != train_set[0].task:
        raise UsageError(f"--task {cfg.task} but {paths['train']} holds {train_set[0].task} labels")
    result = train(cfg, train_set, val_set)
    out = {"best_epoch": result.best_epoch, "best_val_loss": result.best_val_loss,
           "checkpoint": cfg.checkpoint, "history": cfg.history}
    if "test" in paths:
        m = evaluate(result.model, read_jsonl(paths["test"], fam), "test", result.best_epoch)
        out["test"] = m.__dict__
    _emit(out)


def cmd_eval(args) -> None:
    model = load_model(args.checkpoint)
    data = read_jsonl(args.data, model.family)
    _emit(evaluate(model, data, args.split).__dict__)


def _braid_model(path) -> MatrixNetModel:
    model = load_model(path)
    if not isinstance(model.family, Braid):
        raise UsageError(f"{path} is not a braid model")
    return model


def cmd_extrapolate(args) -> None:
    model = _braid_model(args.checkpoint)
    rows = ex.run_extrapolation(model, args.lengths, args.count, _seed(args.seed),
                                args.start_vertex, args.raw_words, args.csv)
    print(ex.format_table(rows, ex.LENGTH_COLUMNS))


def cmd_interpolate(args) -> None:
    model = _braid_model(args.checkpoint)
    row = ex.run_interpolation(model, args.length, args.count, _seed(args.seed),
                               args.start_vertex, args.raw_words, args.csv)
    print(ex.format_table([row], ex.LENGTH_COLUMNS))


def cmd_rel_error(args) -> None:
    model = _braid_model(args.checkpoint)
    if not isinstance(model, MatrixNetModel):
        raise UsageError("relational error is defined for MatrixNet checkpoints")
    _emit(ex.run_rel_error(model))


def cmd_export_reps(args) -> None:
    model = load_model(args.checkpoint)
    if not isinstance(model, MatrixNetModel):
        raise UsageError("only MatrixNet checkpoints have learned representations")
    pairs = [tuple(p.split("=", 1)) for p in args.pair] if args.pair else ex.DEFAULT_PAIRS
    if any(len(p) != 2 for p in pairs):
        raise UsageError("--pair takes 'word=word'")
    for rec in ex.export_representations(model, args.out_dir, pairs, args.word):
        _emit(rec)


def cmd_oracle(args) -> None:
    fam = _family(args.family)
    try:
        w = parse_word(args.word, fam)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if isinstance(fam, Braid):
        oracle = BraidOracle(fam.n, args.start_vertex, not args.left_to_right)
        label = list(oracle.label(w))
        if args.graded:
            graded = [{str(d): c for d, c in sorted(g.items())} for g in oracle.graded(w)]
            _emit({"label": label, "graded": graded})
        else:
            _emit(label)
    else:
        if args.graded:
            raise UsageError("--graded applies to braid families only")
        _emit(word_order(w))


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="grouprep", description="Group-word oracles and MatrixNet experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-dataset", help="generate a JSONL dataset and manifest")
    g.add_argument("--family", required=True)
    g.add_argument("--mode", choices=("enumerate", "sample"), default="enumerate")
    g.add_argument("--max-len", type=int)
    g.add_argument("--count", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--start-vertex", type=int, default=1)
    g.add_argument("--raw-words", action="store_true", help="do not freely reduce enumerated words")
    g.add_argument("--no-identity", action="store_true", help="order task: omit the identity symbol")
    g.add_argument("--out", required=True, type=Path)
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", type=Path, help="flat key = value file; flags override it")
    for k in ex.DATA_KEYS:
        t.add_argument(f"--{k}")
    for name, typ in TRAIN_FLAGS.items():
        t.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    t.add_argument("--head-hidden", type=int, nargs="+")
    t.add_argument("--no-relation-loss", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test")
    e.set_defaults(func=cmd_eval)

    for name, func, help_ in (("extrapolate", cmd_extrapolate, "metrics on longer sampled words"),
                              ("interpolate", cmd_interpolate, "metrics on shorter sampled words")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--checkpoint", required=True)
        if name == "extrapolate":
            s.add_argument("--lengths", type=int, nargs="+", default=[8, 9, 10])
        else:
            s.add_argument("--length", type=int, default=5)
        s.add_argument("--count", type=int, default=10_000)
        s.add_argument("--seed", type=int)
        s.add_argument("--start-vertex", type=int, default=1)
        s.add_argument("--raw-words", action="store_true")
        s.add_argument("--csv", type=Path)
        s.set_defaults(func=func)

    r = sub.add_parser("rel-error", help="relational error of a braid checkpoint")
    r.add_argument("--checkpoint", required=True)
    r.set_defaults(func=cmd_rel_error)

    x = sub.add_parser("export-reps", help="write learned matrices as CSV and PNG")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--out-dir", required=True, type=Path)
    x.add_argument("--pair", action="append", help="equivalent words as 'w1=w2' (repeatable)")
    x.add_argument("--word", action="append", default=[], help="extra single word (repeatable)")
    x.set_defaults(func=cmd_export_reps)

    o = sub.add_parser("oracle", help="exact label of one word")
    o.add_argument("--family", required=True)
    o.add_argument("--start-vertex", type=int, default=1)
    o.add_argument("--graded", action="store_true", help="also print graded multiplicities")
    o.add_argument("--left-to-right", action="store_true", help="apply the leftmost symbol first")
    o.add_argument("word", help="e.g. \"s1 s2' e\"; empty string for the identity")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"grouprep {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"grouprep {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

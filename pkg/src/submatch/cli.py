"""Command line entry point: ``submatch <command> [options]``.

Commands
--------
gen     sample (data, query) pairs and split them into train/val/test files
match   enumerate exact matches for every pair in a pair file
train   fit a model on a training and a validation pair file
eval    score a checkpoint on a pair file
bench   time exact enumeration against model inference
ablate  train the full model and both ablations with shared seeds

Options may also come from an INI file given with ``--config``. Section
``[global]`` holds global options and a section per command holds that
command's options; keys are option names without the leading dashes
(``no-cross = true``). Options given on the command line win. Every run
writes ``manifest.json`` next to its outputs with the effective settings.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import platform
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .exact import enumerate_mappings
from .harness import (
    TrainConfig,
    TrainedModel,
    bench_runtime,
    bench_summary,
    evaluate,
    format_table,
    run_ablation,
    train,
)
from .io import DataFormatError, load_tudataset, read_pairs, write_pairs
from .model import ModelConfig
from .numerics import NonFiniteError
from .pairgen import GenConfig, SyntheticParams, generate_pairs, generate_synthetic_corpus

logger = logging.getLogger("submatch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _unit_float(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a number in [0, 1], got {text}")
    return value


def _split(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in text.split(":"))
    except ValueError:
        parts = ()
    if len(parts) != 3 or min(parts) < 0 or sum(parts) <= 0:
        raise argparse.ArgumentTypeError(f"expected train:val:test weights such as 8:1:1, got {text}")
    return parts


def _source(text: str) -> str:
    if text == "synthetic" or (text.startswith("tud:") and len(text) > 4):
        return text
    raise argparse.ArgumentTypeError(f"expected 'synthetic' or 'tud:<dir>', got {text}")


def _add_global(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="root seed for every random stream (default 0)")
    g.add_argument("--config", metavar="FILE", help="INI file with default option values")
    g.add_argument("--out", metavar="PATH", help="output directory (default: current directory)")
    g.add_argument("--threads", type=_positive_int, default=1,
                   help="worker processes for gen and eval (default 1)")
    g.add_argument("--verbose", action="store_true", help="log progress to stderr instead of a JSON summary")


def _add_model(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model and training")
    g.add_argument("--epochs", type=_positive_int, default=100, help="training epochs (default 100)")
    g.add_argument("--lr", type=_positive_float, default=0.001, help="Adam step size (default 0.001)")
    g.add_argument("--layers", type=_positive_int, default=3, help="attention layers, at least 2 (default 3)")
    g.add_argument("--heads", type=_positive_int, default=4, help="heads per layer (default 4)")
    g.add_argument("--dim", type=_positive_int, default=32, help="hidden width, divisible by --heads (default 32)")
    g.add_argument("--lambda1", type=_unit_float, default=0.5, help="edge-deleting loss weight (default 0.5)")
    g.add_argument("--lambda2", type=_unit_float, default=0.2, help="inner-layer loss weight (default 0.2)")
    g.add_argument("--tau", type=float, default=ModelConfig.tau_init,
                   help=f"initial matching temperature in (0, 1) (default {ModelConfig.tau_init})")
    g.add_argument("--patience", type=_positive_int, help="stop after this many epochs without improvement")
    g.add_argument("--no-cross", action="store_true", help="disable cross propagation into the query graph")
    g.add_argument("--no-delete", action="store_true", help="train without the edge-deleting loss")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="submatch", description="Exact and learned subgraph matching.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", help="generate pair files", description="Sample connected query subgraphs "
                       "from a corpus and write train/val/test pair files plus a manifest.")
    p.add_argument("--source", type=_source, default="synthetic",
                   help="'synthetic' or 'tud:<dir>' for a TUDataset directory (default synthetic)")
    p.add_argument("--num", type=_positive_int, default=100, help="total number of pairs (default 100)")
    p.add_argument("--qmin", type=_positive_int, default=5, help="smallest query size (default 5)")
    p.add_argument("--qmax", type=_positive_int, default=8, help="largest query size (default 8)")
    p.add_argument("--split", type=_split, default=(8.0, 1.0, 1.0),
                   help="train:val:test weights (default 8:1:1)")
    p.add_argument("--mapping-cap", type=_positive_int, default=1000,
                   help="maximum stored mappings per pair (default 1000)")
    p.add_argument("--graphs", type=_positive_int, default=100, help="synthetic corpus size (default 100)")
    p.add_argument("--nodes", default="15:25", help="synthetic graph size range lo:hi (default 15:25)")
    p.add_argument("--edge-prob", type=_unit_float, default=0.3, help="synthetic edge probability (default 0.3)")
    p.add_argument("--labels", type=int, default=4, help="synthetic node labels, 0 for none (default 4)")
    _add_global(p)

    p = sub.add_parser("match", help="exact matching", description="Enumerate induced subgraph "
                       "isomorphisms of each query in its data graph.")
    p.add_argument("pairs", help="pair file (JSON lines)")
    p.add_argument("--mode", choices=("all", "first", "exists"), default="all", help="search mode (default all)")
    p.add_argument("--deadline", type=_positive_float, help="seconds per pair before giving up")
    p.add_argument("--limit", type=_positive_int, help="stop after this many mappings per pair")
    p.add_argument("--non-induced", action="store_true", help="allow extra data edges between matched nodes")
    _add_global(p)

    p = sub.add_parser("train", help="train a model", description="Train on a pair file, keep the "
                       "checkpoint with the best validation F1.")
    p.add_argument("--train", dest="train_file", required=True, metavar="FILE", help="training pair file")
    p.add_argument("--val", dest="val_file", required=True, metavar="FILE", help="validation pair file")
    _add_model(p)
    _add_global(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint", description="Top-1 precision, recall and F1 "
                       "of a checkpoint on a pair file.")
    p.add_argument("pairs", help="pair file (JSON lines)")
    p.add_argument("--ckpt", required=True, metavar="FILE", help="checkpoint written by train")
    p.add_argument("--noise-std", type=float, default=0.0,
                   help="Gaussian noise on numerical node features (default 0)")
    p.add_argument("--by-ratio", action="store_true", help="also report F1 per |Q|/|G| bucket of width 0.1")
    _add_global(p)

    p = sub.add_parser("bench", help="runtime benchmark", description="Time exact enumeration and model "
                       "inference per pair.")
    p.add_argument("pairs", help="pair file (JSON lines)")
    p.add_argument("--ckpt", metavar="FILE", help="checkpoint for the model column")
    p.add_argument("--matchers", default="exact-all,exact-first,model",
                   help="comma-separated subset of exact-all, exact-first, model")
    p.add_argument("--deadline", type=_positive_float, help="seconds per exact search")
    p.add_argument("--repeats", type=_positive_int, default=1, help="best of this many runs (default 1)")
    _add_global(p)

    p = sub.add_parser("ablate", help="ablation study", description="Train the full model, the model "
                       "without cross propagation and the model without edge deletion.")
    p.add_argument("--train", dest="train_file", required=True, metavar="FILE", help="training pair file")
    p.add_argument("--val", dest="val_file", required=True, metavar="FILE", help="validation pair file")
    p.add_argument("--test", dest="test_file", required=True, metavar="FILE", help="test pair file")
    _add_model(p)
    _add_global(p)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _config_defaults(sub: argparse.ArgumentParser, path: str, command: str) -> dict:
    """Option values from the INI file, converted like command-line values."""
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    except configparser.Error as exc:
        raise UsageError(f"malformed config file {path}: {exc}") from None
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    by_key = {opt.lstrip("-"): a for a in actions.values() for opt in a.option_strings}
    out = {}
    for section in ("global", command):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            action = by_key.get(key)
            if action is None or key == "config":
                raise UsageError(f"{path}: unknown option '{key}' in section [{section}]")
            if isinstance(action, argparse._StoreTrueAction):
                try:
                    out[action.dest] = cp.getboolean(section, key)
                except ValueError:
                    raise UsageError(f"{path}: '{key}' must be true or false") from None
                continue
            try:
                value = action.type(raw) if action.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{path}: bad value for '{key}': {exc}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"{path}: '{key}' must be one of {sorted(action.choices)}")
            out[action.dest] = value
    return out


def parse_args(argv: Optional[Sequence[str]]) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    first = parser.parse_args(argv)
    if first.config is None:
        return first
    sub = _subparser(parser, first.command)
    sub.set_defaults(**_config_defaults(sub, first.config, first.command))
    return parser.parse_args(argv)


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _settings(args) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())}


def write_manifest(out: Path, args, outputs: dict, extra: Optional[dict] = None) -> Path:
    manifest = {
        "tool": "submatch",
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "settings": _settings(args),
        "outputs": outputs,
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _read(path: str):
    try:
        return read_pairs(path)
    except FileNotFoundError:
        raise DataFormatError(f"pair file not found: {path}") from None


def _model_config(args) -> ModelConfig:
    try:
        return ModelConfig(n_layers=args.layers, n_heads=args.heads, hidden_dim=args.dim,
                           lambda1=args.lambda1, lambda2=args.lambda2, tau_init=args.tau)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _train_config(args, out: Path) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, lr=args.lr, seed=args.seed, checkpoint_dir=str(out / "checkpoints"),
                       no_cross=args.no_cross, no_delete=args.no_delete, patience=args.patience)


def _split_counts(total: int, weights) -> list[int]:
    w = np.asarray(weights, dtype=float) / float(np.sum(weights))
    counts = np.floor(w * total).astype(int)
    # hand the remainder to the largest fractional parts, earlier splits first on ties
    rest = total - counts.sum()
    order = sorted(range(3), key=lambda k: (-(w[k] * total - counts[k]), k))
    for k in order[:rest]:
        counts[k] += 1
    return counts.tolist()


def cmd_gen(args) -> dict:
    if args.qmin > args.qmax:
        raise UsageError("--qmin must not exceed --qmax")
    out = _out_dir(args)
    streams = np.random.SeedSequence(args.seed).spawn(2)
    if args.source == "synthetic":
        try:
            lo, hi = (int(x) for x in args.nodes.split(":"))
            params = SyntheticParams(args.graphs, (lo, hi), args.edge_prob, args.labels)
        except ValueError as exc:
            raise UsageError(f"bad synthetic corpus settings: {exc}") from None
        corpus = generate_synthetic_corpus(params, np.random.default_rng(streams[0]))
        corpus_info = {"source": "synthetic", **asdict(params)}
    else:
        directory = args.source[4:]
        if not Path(directory).is_dir():
            raise DataFormatError(f"TUDataset directory not found: {directory}")
        corpus = load_tudataset(directory)
        corpus_info = {"source": "tud", "directory": directory, "graphs": len(corpus)}
    pair_seed = int(streams[1].generate_state(1)[0])
    cfg = GenConfig((args.qmin, args.qmax), args.num, pair_seed, args.mapping_cap)
    pairs = generate_pairs(cfg, corpus, n_jobs=args.threads)
    counts = _split_counts(len(pairs), args.split)
    outputs, start = {}, 0
    for name, n in zip(("train", "val", "test"), counts):
        path = out / f"{name}.jsonl"
        write_pairs(path, pairs[start:start + n])
        outputs[name] = {"path": str(path), "pairs": n}
        start += n
    truncated = sum(p.truncated for p in pairs)
    write_manifest(out, args, outputs, {"corpus": corpus_info, "pair_seed": pair_seed})
    logger.info("wrote %d pairs (%s) to %s", len(pairs), "/".join(map(str, counts)), out)
    return {"pairs": len(pairs), "split": counts, "truncated": truncated, "out": str(out)}


def cmd_match(args) -> dict:
    pairs = _read(args.pairs)
    out = _out_dir(args)
    records = []
    for k, pair in enumerate(pairs):
        res = enumerate_mappings(pair.data_graph, pair.query_graph, mode=args.mode, limit=args.limit,
                                 deadline=args.deadline, induced=not args.non_induced)
        rec = {"pair": k, "found": res.found, "mappings": len(res.mappings), **asdict(res.stats)}
        records.append(rec)
        logger.info("pair %d: %d mappings, %d states, %.4fs%s", k, len(res.mappings), res.stats.states,
                    res.stats.wall_time, " (incomplete)" if not res.stats.complete else "")
    path = out / "matches.csv"
    path.write_text(format_table(records))
    write_manifest(out, args, {"report": str(path)})
    return {"pairs": len(pairs), "mappings": [r["mappings"] for r in records],
            "found": sum(r["found"] for r in records), "complete": all(r["complete"] for r in records),
            "report": str(path)}


def cmd_train(args) -> dict:
    pairs_train, pairs_val = _read(args.train_file), _read(args.val_file)
    out = _out_dir(args)
    result = train(pairs_train, pairs_val, _model_config(args), _train_config(args, out),
                   log_path=out / "train_log.jsonl")
    best = out / "best.json"
    result.model.save(best, meta={"best_epoch": result.best_epoch, "best_val_f1": result.best_val_f1})
    write_manifest(out, args, {"checkpoint": str(best), "log": str(out / "train_log.jsonl"),
                               "epoch_checkpoints": result.checkpoints},
                   {"model": result.model.config.to_dict()})
    return {"best_epoch": result.best_epoch, "best_val_f1": result.best_val_f1, "checkpoint": str(best),
            "epochs_run": len(result.log)}


def cmd_eval(args) -> dict:
    pairs = _read(args.pairs)
    out = _out_dir(args)
    model = TrainedModel.load(args.ckpt)
    try:
        report = evaluate(pairs, model, noise_std=args.noise_std, by_ratio=args.by_ratio, seed=args.seed,
                          n_jobs=args.threads)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None
    path = out / "eval.csv"
    path.write_text(report.to_csv())
    summary = report.summary()
    summary.pop("mean_seconds")
    write_manifest(out, args, {"report": str(path)}, {"summary": summary})
    return {**summary, "report": str(path)}


def cmd_bench(args) -> dict:
    pairs = _read(args.pairs)
    out = _out_dir(args)
    matchers = tuple(m.strip() for m in args.matchers.split(",") if m.strip())
    bad = [m for m in matchers if m not in ("exact-all", "exact-first", "model")]
    if bad or not matchers:
        raise UsageError(f"unknown matcher(s) {bad}; choose from exact-all, exact-first, model")
    model = None
    if "model" in matchers:
        if args.ckpt is None:
            raise UsageError("the model matcher needs --ckpt")
        model = TrainedModel.load(args.ckpt)
    rows = bench_runtime(pairs, model, matchers, deadline=args.deadline, repeats=args.repeats)
    table = bench_summary(rows)
    per_pair = out / "bench_pairs.csv"
    per_pair.write_text(format_table([asdict(r) for r in rows]))
    path = out / "bench.csv"
    path.write_text(format_table(table))
    write_manifest(out, args, {"report": str(path), "per_pair": str(per_pair)})
    if args.verbose:
        sys.stderr.write(format_table(table))
    return {"rows": table, "report": str(path)}


def cmd_ablate(args) -> dict:
    pairs = [_read(f) for f in (args.train_file, args.val_file, args.test_file)]
    out = _out_dir(args)
    tc = _train_config(args, out)
    rows = run_ablation(*pairs, _model_config(args), tc, checkpoint_root=str(out / "checkpoints"))
    records = [{"variant": r.variant, "test_f1": r.test_f1, "train_f1": r.train_f1,
                "best_val_f1": r.best_val_f1, "best_epoch": r.best_epoch, "final_l_de": r.final_l_de}
               for r in rows]
    path = out / "ablation.csv"
    path.write_text(format_table(records))
    write_manifest(out, args, {"report": str(path)})
    return {"rows": records, "report": str(path)}


COMMANDS = {"gen": cmd_gen, "match": cmd_match, "train": cmd_train, "eval": cmd_eval,
            "bench": cmd_bench, "ablate": cmd_ablate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"submatch: error: {exc}\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"submatch {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except NonFiniteError as exc:
        sys.stderr.write(f"submatch {args.command}: numeric failure: {exc}; try a smaller --lr\n")
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        # pair, corpus, graph and checkpoint validation all raise ValueError subclasses
        sys.stderr.write(f"submatch {args.command}: data error: {exc}\n")
        return EXIT_DATA
    if not args.verbose:
        sys.stdout.write(json.dumps({"command": args.command, **summary}, sort_keys=True, default=str) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

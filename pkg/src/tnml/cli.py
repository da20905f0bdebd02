"""Command line interface: ``tnml <command> ...``.

Every command reads its inputs, writes new output files (refusing to
overwrite existing ones) and records a key-value manifest next to its main
output. Exit codes: 0 success, 2 invalid flags or inputs, 3 unreadable data
or model file, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .analysis import compress, compression_sweep, entropy_map
from .classifier import evaluate
from .encoding import dataset_hash, generate_synthetic, load_dataset, save_dataset, split_dataset
from .errors import FormatError, NumericalError, ShapeError
from .persistence import load_model, save_model
from .poison import BackgroundSpeckle, PoisonSpec, SinglePixel, apply_poison, default_background_mask
from .report import (
    COMPRESSION_COLUMNS,
    TRAIN_COLUMNS,
    grid_csv,
    heatmap_svg,
    line_chart_svg,
    rows_csv,
    write_text,
)
from .trainer import TrainConfig, init_model, train

log = logging.getLogger("tnml")

EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _claim(*paths):
    """Fail before doing any work if an output already exists."""
    for p in paths:
        if p is not None and os.path.exists(p):
            raise UsageError(f"output {p} already exists; choose a new path")
        if p is not None:
            parent = os.path.dirname(os.path.abspath(p))
            if not os.path.isdir(parent):
                raise UsageError(f"output directory {parent} does not exist")


def _need(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} {path} not found")
    return path


def _manifest(path, args, inputs, outputs, seeds, hashes, started):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    lines = [
        f"command: {args.command}{' ' + args.action if getattr(args, 'action', None) else ''}",
        f"tool_version: {__version__}",
        f"started: {datetime.datetime.fromtimestamp(started, datetime.timezone.utc).isoformat()}",
        f"wall_time_s: {time.time() - started:.3f}",
        f"config: {json.dumps(cfg, sort_keys=True, default=str)}",
        f"seeds: {json.dumps(seeds, sort_keys=True)}",
        f"inputs: {json.dumps(inputs)}",
        f"outputs: {json.dumps(outputs)}",
        f"dataset_hashes: {json.dumps(hashes, sort_keys=True)}",
    ]
    write_text(path, "\n".join(lines) + "\n")


def _manifest_path(args, primary):
    return args.manifest or f"{primary}.manifest"


def _parse_grid(text):
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise UsageError(f"--eps-grid expects lo:hi:points, got {text!r}") from None
    if not (0 < lo < hi) or n < 2:
        raise UsageError("--eps-grid needs 0 < lo < hi and at least 2 points")
    return [float(f"{v:.6g}") for v in np.logspace(np.log10(lo), np.log10(hi), n)]


def _threads(args):
    n = args.threads
    if n is None and os.environ.get("TNET_THREADS"):
        try:
            n = int(os.environ["TNET_THREADS"])
        except ValueError:
            raise UsageError("TNET_THREADS must be an integer") from None
    if n is not None and n < 1:
        raise UsageError("--threads must be >= 1")
    return n


# --------------------------------------------------------------- commands


def cmd_dataset(args):
    started = time.time()
    if args.action == "synth":
        _claim(args.out, _manifest_path(args, args.out))
        size = (args.size, args.size)
        try:
            ds = generate_synthetic(args.n, args.classes, size, args.clutter_variance, args.seed,
                                    args.background, args.target)
        except (ValueError, ShapeError) as exc:
            raise UsageError(str(exc)) from exc
        save_dataset(ds, args.out)
        _manifest(_manifest_path(args, args.out), args, [], [args.out], {"seed": args.seed},
                  {args.out: dataset_hash(ds)}, started)
        print(f"wrote {len(ds)} samples to {args.out}")
    elif args.action == "split":
        _claim(args.train_out, args.test_out, _manifest_path(args, args.train_out))
        ds = load_dataset(_need(args.input, "dataset"))
        if not 0 < args.frac < 1:
            raise UsageError("--frac must lie strictly between 0 and 1")
        tr, te = split_dataset(ds, args.frac, args.seed)
        save_dataset(tr, args.train_out)
        save_dataset(te, args.test_out)
        _manifest(_manifest_path(args, args.train_out), args, [args.input], [args.train_out, args.test_out],
                  {"seed": args.seed},
                  {args.input: dataset_hash(ds), args.train_out: dataset_hash(tr), args.test_out: dataset_hash(te)},
                  started)
        print(f"train {len(tr)} -> {args.train_out}\ntest {len(te)} -> {args.test_out}")
    else:
        _claim(args.out, _manifest_path(args, args.out))
        ds = load_dataset(_need(args.input, "dataset"))
        h, w = ds.shape
        if args.variant == "pixel":
            if args.pixel is None:
                raise UsageError("--variant pixel needs --pixel INDEX (flat, row-major)")
            variance = 1e-4 if args.variance is None else args.variance
            variant = SinglePixel(args.pixel, variance)
        else:
            if args.mask_extent is None:
                raise UsageError("--variant speckle needs --mask-extent (half side of the kept center square)")
            variance = 0.02 if args.variance is None else args.variance
            try:
                mask = default_background_mask(h, w, args.mask_extent)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            variant = BackgroundSpeckle(mask, variance)
        try:
            spec = PoisonSpec(variant, args.seed, ds.n_classes)
            out = apply_poison(ds, spec)
        except (ValueError, ShapeError) as exc:
            raise UsageError(str(exc)) from exc
        save_dataset(out, args.out)
        _manifest(_manifest_path(args, args.out), args, [args.input], [args.out], {"seed": args.seed},
                  {args.input: dataset_hash(ds), args.out: dataset_hash(out)}, started)
        print(f"poisoned ({args.variant}) {len(out)} samples -> {args.out}")
    return 0


def cmd_train(args):
    started = time.time()
    report = args.report or f"{args.out}.train.csv"
    _claim(args.out, f"{args.out}.json", report, _manifest_path(args, args.out))
    tr = load_dataset(_need(args.train, "training set"))
    val = load_dataset(_need(args.val, "validation set")) if args.val else None
    try:
        cfg = TrainConfig(
            max_bond_dim=args.chi, n_sweeps=args.sweeps, learning_rate=args.lr, batch_size=args.batch,
            steps_per_update=args.steps, truncation_eps=args.truncation_eps, seed=args.seed,
            patience=args.patience, data_init=not args.random_init, logit_scale=args.logit_scale,
        )
        h, w = tr.shape
        model = init_model(args.topology, h * w, tr.n_classes, chi_init=min(args.chi, 2),
                           seed=args.seed, image_shape=(h, w))
    except (ValueError, ShapeError) as exc:
        raise UsageError(str(exc)) from exc
    trained, rep = train(model, tr, val, cfg)
    hashes = {args.train: dataset_hash(tr)}
    if val is not None:
        hashes[args.val] = dataset_hash(val)
    save_model(trained, args.out, provenance={
        "config": cfg.to_dict(), "topology": args.topology, "seed": args.seed,
        "dataset_hashes": hashes, "best_sweep": rep.best_sweep, "tool_version": __version__,
    })
    rows = [
        {"sweep": i, "train_loss": rep.train_loss[i], "train_accuracy": rep.train_accuracy[i],
         "val_accuracy": rep.val_accuracy[i], "wall_time_s": rep.wall_time[i]}
        for i in range(rep.n_sweeps)
    ]
    write_text(report, rows_csv(TRAIN_COLUMNS, rows))
    _manifest(_manifest_path(args, args.out), args, [p for p in (args.train, args.val) if p],
              [args.out, f"{args.out}.json", report], {"seed": args.seed}, hashes, started)
    which = "val" if val is not None else "train"
    print(f"best sweep {rep.best_sweep}: {which} accuracy {rep.val_accuracy[rep.best_sweep]:.4f} -> {args.out}")
    return 0


def cmd_entropy(args):
    started = time.time()
    _claim(args.csv, args.svg, _manifest_path(args, args.csv))
    model = load_model(_need(args.model, "model"))
    emap = entropy_map(model, model_ref=args.model)
    write_text(args.csv, grid_csv(emap.values))
    outputs = [args.csv]
    if args.svg:
        write_text(args.svg, heatmap_svg(emap.values, title=f"feature entropy: {os.path.basename(args.model)}"))
        outputs.append(args.svg)
    _manifest(_manifest_path(args, args.csv), args, [args.model], outputs, {}, {}, started)
    if args.top:
        print("row,col,entropy_nats")
        for r, c, v in emap.top(args.top):
            print(f"{r},{c},{v!r}")
    return 0


def cmd_compress(args):
    started = time.time()
    if (args.eps is None) == (args.eps_grid is None):
        raise UsageError("give exactly one of --eps or --eps-grid")
    if args.eps is not None and args.eps < 0:
        raise UsageError("--eps must be nonnegative")
    if args.require_accuracy and not args.test:
        raise UsageError("accuracy was requested but no --test set was given")
    _claim(args.out, args.csv, args.svg, _manifest_path(args, args.csv))
    eps_list = [args.eps] if args.eps is not None else _parse_grid(args.eps_grid)
    if args.out and len(eps_list) != 1:
        raise UsageError("--out stores one compressed model; use it with --eps")
    model = load_model(_need(args.model, "model"))
    test = load_dataset(_need(args.test, "test set")) if args.test else None
    reports = compression_sweep(model, eps_list, test)
    rows = []
    for r in reports:
        row = r.as_row()
        if r.accuracy_after is not None:
            row["accuracy_delta"] = r.accuracy_after - r.accuracy_before
        rows.append(row)
    write_text(args.csv, rows_csv(COMPRESSION_COLUMNS, rows))
    outputs = [args.csv]
    if args.svg:
        series = {"params": [r.params_after for r in reports]}
        if test is not None:
            series["accuracy"] = [r.accuracy_after for r in reports]
        write_text(args.svg, line_chart_svg(eps_list, series, title="compression sweep", xlabel="eps", log_x=True))
        outputs.append(args.svg)
    if args.out:
        compressed, _ = compress(model, eps_list[0])
        save_model(compressed, args.out, provenance={"source_model": args.model, "eps": eps_list[0],
                                                     "tool_version": __version__})
        outputs += [args.out, f"{args.out}.json"]
    hashes = {args.test: dataset_hash(test)} if test is not None else {}
    _manifest(_manifest_path(args, args.csv), args, [p for p in (args.model, args.test) if p], outputs, {},
              hashes, started)
    for row in rows:
        acc = "" if row["accuracy_after"] is None else f" accuracy {row['accuracy_after']:.4f}"
        print(f"eps {row['eps']:.3g}: params {row['params_after']} r {row['ratio']:.4f}{acc}")
    return 0


def cmd_eval(args):
    started = time.time()
    conf_path = args.confusion or f"{args.csv}.confusion.csv"
    _claim(args.csv, conf_path, _manifest_path(args, args.csv))
    model = load_model(_need(args.model, "model"))
    rows, hashes = [], {}
    confusion_lines = []
    for path in args.data:
        ds = load_dataset(_need(path, "dataset"))
        try:
            acc, conf = evaluate(model, ds)
        except ShapeError as exc:
            raise UsageError(f"{path}: {exc}") from exc
        hashes[path] = dataset_hash(ds)
        rows.append({"dataset": path, "n_samples": len(ds), "accuracy": acc})
        for t in range(conf.shape[0]):
            confusion_lines.append({"dataset": path, "true": t,
                                    **{f"pred{p}": int(conf[t, p]) for p in range(conf.shape[1])}})
        print(f"{path}: accuracy {acc:.4f} ({len(ds)} samples)")
    if len(rows) >= 2:
        print(f"gap (first - second): {rows[0]['accuracy'] - rows[1]['accuracy']:+.4f}")
    write_text(args.csv, rows_csv(("dataset", "n_samples", "accuracy"), rows))
    outputs = [args.csv]
    n_cls = model.n_classes
    write_text(conf_path, rows_csv(("dataset", "true") + tuple(f"pred{p}" for p in range(n_cls)), confusion_lines))
    outputs.append(conf_path)
    _manifest(_manifest_path(args, args.csv), args, [args.model] + list(args.data), outputs, {}, hashes, started)
    return 0


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tnml", description="Tensor-network classifiers: train, audit, compress.")
    p.add_argument("--version", action="version", version=f"tnml {__version__}")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS threads (default: $TNET_THREADS)")
    p.add_argument("--manifest", default=None, help="manifest path (default: next to the main output)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="create, split or poison TNDS datasets")
    dsub = ds.add_subparsers(dest="action", required=True)
    s = dsub.add_parser("synth", help="synthetic targets on speckle clutter")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--size", type=int, default=16)
    s.add_argument("--classes", type=int, default=8)
    s.add_argument("--clutter-variance", type=float, default=0.1)
    s.add_argument("--background", type=float, default=0.15)
    s.add_argument("--target", type=float, default=0.6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s = dsub.add_parser("split", help="random train/test split")
    s.add_argument("--input", required=True)
    s.add_argument("--frac", type=float, default=0.7)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--train-out", required=True)
    s.add_argument("--test-out", required=True)
    s = dsub.add_parser("poison", help="single-pixel or background-speckle attack")
    s.add_argument("--input", required=True)
    s.add_argument("--variant", choices=("pixel", "speckle"), required=True)
    s.add_argument("--pixel", type=int, help="flat row-major index of the poisoned pixel")
    s.add_argument("--mask-extent", type=int, help="half side of the untouched center square")
    s.add_argument("--variance", type=float, help="noise variance (default 1e-4 pixel, 0.02 speckle)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    ds.set_defaults(func=cmd_dataset)

    t = sub.add_parser("train", help="sweep-train a classifier")
    t.add_argument("--train", required=True)
    t.add_argument("--val")
    t.add_argument("--topology", choices=("ttn", "mps"), default="ttn")
    t.add_argument("--chi", type=int, default=8)
    t.add_argument("--sweeps", type=int, default=6)
    t.add_argument("--lr", type=float, default=0.5)
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--steps", type=int, default=2, help="gradient steps per merged pair")
    t.add_argument("--truncation-eps", type=float, default=0.0)
    t.add_argument("--logit-scale", type=float, default=10.0)
    t.add_argument("--patience", type=int)
    t.add_argument("--random-init", action="store_true", help="skip the data-driven initialization")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="model file (TNMW)")
    t.add_argument("--report", help="per-sweep CSV (default: OUT.train.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("entropy", help="feature entropy map of a model")
    e.add_argument("--model", required=True)
    e.add_argument("--csv", required=True)
    e.add_argument("--svg")
    e.add_argument("--top", type=int, default=0, help="print the N highest-entropy pixels")
    e.set_defaults(func=cmd_entropy)

    c = sub.add_parser("compress", help="Schmidt truncation with an eps budget per link")
    c.add_argument("--model", required=True)
    c.add_argument("--eps", type=float)
    c.add_argument("--eps-grid", help="lo:hi:points, logarithmically spaced, e.g. 1e-6:1e-1:11")
    c.add_argument("--test", help="TNDS test set for accuracies")
    c.add_argument("--require-accuracy", action="store_true", help="fail unless --test is given")
    c.add_argument("--csv", required=True)
    c.add_argument("--svg")
    c.add_argument("--out", help="write the compressed model (single --eps only)")
    c.set_defaults(func=cmd_compress)

    v = sub.add_parser("eval", help="accuracy and confusion matrix on one or more datasets")
    v.add_argument("--model", required=True)
    v.add_argument("--data", nargs="+", required=True)
    v.add_argument("--csv", required=True)
    v.add_argument("--confusion", help="confusion CSV (default: CSV.confusion.csv)")
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        threads = _threads(args)
        if threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                return args.func(args)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: gen, rasterize, wpe, train, eval, report, predict.  Runs
are configured by a JSON document (see README for the schema); every
flag mirrors a config key and takes precedence over the file.  Exit
codes: 0 success, 1 configuration error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .errors import DataError, NumericError, ParameterError
from .harness import (
    ExperimentConfig,
    cmd_eval,
    cmd_gen,
    cmd_predict,
    cmd_rasterize,
    cmd_report,
    cmd_train,
    cmd_wpe,
    load_config,
)
from .raster import RenderSpec, WindowSpec


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; bad flags are a
    # configuration problem here, so surface them as ParameterError.
    def error(self, message):
        raise ParameterError(message)


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    dataset = cfg.dataset
    if getattr(args, "generator", None):
        dataset = replace(dataset, generator=args.generator, name=args.generator)
    if getattr(args, "counts", None):
        dataset = replace(dataset, counts=tuple(args.counts))
    if getattr(args, "seed", None) is not None:
        dataset = replace(dataset, seed=args.seed)
    if getattr(args, "series_len", None):
        dataset = replace(dataset, series_len=args.series_len)
    cfg = replace(cfg, dataset=dataset)

    if getattr(args, "model", None):
        cfg = replace(cfg, model_kind=args.model)
    if getattr(args, "model_seed", None) is not None:
        cfg = replace(cfg, model_seed=args.model_seed)

    train_cfg = cfg.train
    if getattr(args, "max_epochs", None):
        train_cfg = replace(train_cfg, max_epochs=args.max_epochs)
    if getattr(args, "batch_size", None):
        train_cfg = replace(train_cfg, batch_size=args.batch_size)
    if getattr(args, "lr", None):
        train_cfg = replace(train_cfg, lr_init=args.lr)
    cfg = replace(cfg, train=train_cfg)

    eval_cfg = cfg.eval
    if getattr(args, "threshold", None):
        eval_cfg = replace(eval_cfg, threshold=args.threshold)
    if getattr(args, "threshold_fraction", None) is not None:
        eval_cfg = replace(eval_cfg, threshold_fraction=args.threshold_fraction)
    if getattr(args, "rw_mode", None):
        eval_cfg = replace(eval_cfg, rw_mode=args.rw_mode)
    if getattr(args, "rw_seed", None) is not None:
        eval_cfg = replace(eval_cfg, rw_seed=args.rw_seed)
    cfg = replace(cfg, eval=eval_cfg)

    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _build_parser() -> _Parser:
    parser = _Parser(prog="vforecast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate dataset CSVs and a manifest")
    gen.add_argument("--config")
    gen.add_argument("--out")
    gen.add_argument("--generator", choices=["harmonic", "ou"])
    gen.add_argument("--counts", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    gen.add_argument("--seed", type=int)
    gen.add_argument("--series-len", type=int, dest="series_len")

    ras = sub.add_parser("rasterize", help="render CSV series to PGM/VFIM images")
    ras.add_argument("csv")
    ras.add_argument("--out", required=True)
    ras.add_argument("--width", type=int, default=64)
    ras.add_argument("--height", type=int, default=64)
    ras.add_argument("--epsilon", type=float, default=1e-6)
    ras.add_argument("--no-antialias", action="store_true")
    ras.add_argument("--pairs", action="store_true", help="emit input/target window pairs")
    ras.add_argument("--c", type=float, default=0.75)
    ras.add_argument("--input-len", type=int, default=160, dest="input_len")
    ras.add_argument("--format", choices=["pgm", "vfim", "both"], default="both")
    ras.add_argument("--limit", type=int)

    wpe_p = sub.add_parser("wpe", help="weighted permutation entropy of CSV series")
    wpe_p.add_argument("csv")
    wpe_p.add_argument("--out", required=True)
    wpe_p.add_argument("--bins", type=int, default=20)
    wpe_p.add_argument("--label")

    tr = sub.add_parser("train", help="train a forecaster on a generated dataset")
    tr.add_argument("--config")
    tr.add_argument("--data", required=True, help="directory written by gen")
    tr.add_argument("--out")
    tr.add_argument("--model", choices=["visual", "numeric"])
    tr.add_argument("--model-seed", type=int, dest="model_seed")
    tr.add_argument("--max-epochs", type=int, dest="max_epochs")
    tr.add_argument("--batch-size", type=int, dest="batch_size")
    tr.add_argument("--lr", type=float)
    tr.add_argument("--sample-dump-every", type=int, default=0, dest="sample_dump_every")
    tr.add_argument("--quiet", action="store_true")

    ev = sub.add_parser("eval", help="evaluate a method on the test split")
    ev.add_argument("--config")
    ev.add_argument("--data", required=True)
    ev.add_argument("--method", required=True, choices=["visual", "numeric", "randomwalk", "control"])
    ev.add_argument("--checkpoint", action="append", default=[])
    ev.add_argument("--out")
    ev.add_argument("--threshold", choices=["relative", "absolute"])
    ev.add_argument("--threshold-fraction", type=float, dest="threshold_fraction")
    ev.add_argument("--rw-mode", choices=["mean", "sample"], dest="rw_mode")
    ev.add_argument("--rw-seed", type=int, dest="rw_seed")
    ev.add_argument("--report-name", dest="report_name")

    rep = sub.add_parser("report", help="merge eval reports into a comparison table")
    rep.add_argument("reports", nargs="+")
    rep.add_argument("--out", required=True)
    rep.add_argument("--force", action="store_true")

    pred = sub.add_parser("predict", help="forecast one test example and dump images")
    pred.add_argument("--config")
    pred.add_argument("--data", required=True)
    pred.add_argument("--method", required=True, choices=["visual", "numeric", "randomwalk", "control"])
    pred.add_argument("--checkpoint")
    pred.add_argument("--index", type=int, default=0)
    pred.add_argument("--out")

    return parser


def _apply_thread_cap() -> None:
    raw = os.environ.get("VFORECAST_THREADS", "")
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            raise ParameterError(f"VFORECAST_THREADS must be an integer, got {raw!r}")
        import torch

        torch.set_num_threads(cap)


def _run(args) -> int:
    if args.command == "gen":
        out = cmd_gen(_experiment_config(args))
        print(f"dataset written to {out}")
    elif args.command == "rasterize":
        rspec = RenderSpec(
            width=args.width, height=args.height, epsilon=args.epsilon, antialias=not args.no_antialias
        )
        wspec = WindowSpec(c=args.c, input_len=args.input_len) if args.pairs else None
        out = cmd_rasterize(args.csv, args.out, rspec, wspec, fmt=args.format, limit=args.limit)
        print(f"images written to {out}")
    elif args.command == "wpe":
        out = cmd_wpe(args.csv, args.out, bins=args.bins, label=args.label)
        print(f"complexity summary written to {out}")
    elif args.command == "train":
        cfg = _experiment_config(args)
        log = None if args.quiet else (lambda msg: print(msg, flush=True))
        ckpt, history = cmd_train(cfg, args.data, log=log, sample_dump_every=args.sample_dump_every)
        print(f"checkpoint: {ckpt}")
        print(f"history: {history}")
    elif args.command == "eval":
        cfg = _experiment_config(args)
        report = cmd_eval(cfg, args.data, args.method, checkpoints=args.checkpoint, report_name=args.report_name)
        print(
            f"{report['dataset']}/{report['method']}: "
            f"prediction IoU {report['pred_mean']:.3f}±{report['pred_std']:.3f}, "
            f"JSD {report['jsd']['pred_mean']:.3f}±{report['jsd']['pred_std']:.3f}"
        )
    elif args.command == "report":
        reports = cmd_report(args.reports, args.out, force=args.force)
        print(f"compared {len(reports)} reports; table and figures in {args.out}")
    elif args.command == "predict":
        cfg = _experiment_config(args)
        out = cmd_predict(cfg, args.data, args.method, index=args.index, checkpoint=args.checkpoint)
        print(f"prediction images written to {out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_thread_cap()
        return _run(args)
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``gcreg train``, ``gcreg sweep`` and ``gcreg report``.

Exit codes: 0 on success (a collapsed run is still a success), 2 for a bad
configuration or bad arguments, 3 for input/output failures.

Configuration precedence, lowest first: built-in defaults, ``--from-summary``
(the config echoed by an earlier run), ``--config`` file, ``--set key=value``
pairs, then the dedicated flags such as ``--lambda``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, config, experiment, report
from .errors import ConfigError, FormatError, GcregError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

log = logging.getLogger("gcreg")

# flag dest -> config key
FLAG_KEYS = {
    "reg": "reg.kind",
    "gate": "reg.gate",
    "lam": "reg.lambda",
    "gamma": "reg.gamma",
    "mu": "reg.mu",
    "lr": "opt.lr",
    "momentum": "opt.momentum",
    "batch_size": "opt.batch_size",
    "width": "model.width",
    "depth": "model.depth",
    "dropout": "model.dropout",
    "epochs": "run.epochs",
    "seeds": "run.seeds",
}


def _add_config_args(p: argparse.ArgumentParser, sweep: bool = False):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", "-c", type=Path, help="key = value config file")
    src.add_argument("--from-summary", type=Path, metavar="SUMMARY_JSON",
                     help="reuse the config echoed in an earlier summary.json")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--out", "-o", type=Path, required=True, help="output directory")
    g = p.add_argument_group("overrides")
    g.add_argument("--reg", choices=["l1", "l2"])
    g.add_argument("--gate", choices=["constant", "epoch", "coherence"])
    if not sweep:
        g.add_argument("--lambda", dest="lam", type=str, metavar="LAMBDA")
    g.add_argument("--gamma", type=str)
    g.add_argument("--mu", type=str)
    g.add_argument("--lr", type=str)
    g.add_argument("--momentum", type=str)
    g.add_argument("--batch-size", type=str)
    g.add_argument("--width", type=str)
    if not sweep:
        g.add_argument("--depth", type=str)
    g.add_argument("--dropout", type=str)
    g.add_argument("--epochs", type=str)
    g.add_argument("--seeds", type=str, help="comma-separated seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one configuration over its seeds")
    _add_config_args(train)

    sweep = sub.add_parser("sweep", help="lambda sweep, or depth x lambda sweep")
    _add_config_args(sweep, sweep=True)
    sweep.add_argument("--lambdas", type=str, help="comma-separated, strictly increasing")
    sweep.add_argument("--depths", type=str, help="comma-separated depths (constant gate)")
    sweep.add_argument("--workers", type=int, default=1)

    rep = sub.add_parser("report", help="merge CSVs into long format, optionally draw SVG charts")
    rep.add_argument("inputs", nargs="+", type=Path)
    rep.add_argument("--out", "-o", type=Path, required=True, help="long-format CSV to write")
    rep.add_argument("--svg", type=Path, nargs="?", const=True, default=None, metavar="DIR",
                     help="write one chart per metric (default: next to --out)")
    return parser


def _parse_list(text: str, cast, what: str) -> list:
    items = [s.strip() for s in (text or "").split(",") if s.strip()]
    if not items:
        raise ConfigError(f"empty {what} grid", what)
    try:
        return [cast(s) for s in items]
    except ValueError as exc:
        raise ConfigError(f"bad {what} value: {exc}", what) from exc


def resolve_config(args) -> experiment.RunConfig:
    base = None
    entries: dict = {}
    if args.from_summary is not None:
        try:
            summary = json.loads(args.from_summary.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{args.from_summary}: not JSON ({exc.msg})", exc.pos) from exc
        if not isinstance(summary, dict) or "config" not in summary:
            raise ConfigError(f"{args.from_summary} has no 'config' echo", "config")
        base = config.from_flat(summary["config"])
    if args.config is not None:
        entries.update(config.load_file(args.config))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", item)
        key, value = (s.strip() for s in item.split("=", 1))
        entries[key] = value
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            entries[key] = value
    return config.from_flat(entries, base)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    log.info("training %s/%s lambda=%g over seeds %s", cfg.reg.kind.value, cfg.reg.gate.value,
             cfg.reg.lam, list(cfg.seeds))
    result = experiment.train_run(cfg, args.out)
    ci = "n/a" if result.test_acc_ci is None else f"{result.test_acc_ci:.4f}"
    print(f"test_acc_mean={result.test_acc_mean:.4f} ci95={ci} collapsed={result.collapsed} "
          f"out={args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    if args.lambdas is None:
        raise ConfigError("a sweep needs --lambdas", "lambdas")
    lambdas = _parse_list(args.lambdas, float, "lambdas")
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1", "workers")
    if args.depths is not None:
        depths = _parse_list(args.depths, int, "depths")
        results = experiment.depth_sweep(cfg, depths, lambdas, args.out, args.workers)
        for d, r in results.items():
            print(f"depth={d} tolerance_level={r.tolerance_level}")
        return EXIT_OK
    result = experiment.lambda_sweep(cfg, lambdas, args.out, args.workers)
    for row in result.table():
        print(f"lambda={row['lambda']:.6g} test_acc_mean={row['test_acc_mean']:.4f} "
              f"sparsity={row['sparsity_mean']:.4f} collapsed={row['collapsed']}")
    print(f"tolerance_level={result.tolerance_level}")
    return EXIT_OK


def cmd_report(args) -> int:
    missing = [str(p) for p in args.inputs if not p.is_file()]
    if missing:
        raise FileNotFoundError(f"missing input: {', '.join(missing)}")
    rows = report.merge(args.inputs)
    report.write_long(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    if args.svg is not None:
        svg_dir = args.out.parent if args.svg is True else args.svg
        charts = report.write_charts(rows, svg_dir)
        print(f"wrote {len(charts)} charts to {svg_dir}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        where = f" [{exc.key}]" if exc.key else ""
        print(f"gcreg: config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"gcreg: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GcregError as exc:
        print(f"gcreg: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``dosa <command> ...`` (or ``python -m dosa``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from dosa import __version__
from dosa.errors import ConfigError, DosaError
from dosa.harness import report, runner
from dosa.harness.config import list_presets, load_config


def _parse_ints(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if args.loss is not None:
        changes["loss"] = args.loss
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if args.out is not None:
        changes["output"] = args.out
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    return cfg.replace(**changes) if changes else cfg


def _run(args, mode):
    cfg = _load(args)
    if cfg.mode != mode:
        raise ConfigError(f"config {args.config} is mode {cfg.mode!r}, command needs {mode!r}")
    paths = runner.run_experiment(cfg, jobs=args.jobs)
    out = {"config_hash": cfg.config_hash(), "results": [str(p) for p in paths]}
    for p in paths:
        rec = json.loads(p.read_text())
        rep = rec["report"]
        line = (f"seed {rec['seed']}: micro {rep['micro']:.4f} macro {rep['macro']:.4f} "
                f"weighted {rep['weighted']:.4f} inv-weighted {rep['inverse_weighted']:.4f}")
        if rec.get("combined"):
            line += " combined " + " ".join(f"{v:.4f}" for v in rec["combined"])
        print(line)
    print(json.dumps(out))


def cmd_run_mll(args):
    _run(args, "mll")


def cmd_run_cmll(args):
    _run(args, "cmll")


def _print_table(table):
    if not table:
        return
    cols = list(table[0])
    print("\t".join(cols))
    for row in table:
        print("\t".join(f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]) for c in cols))


def cmd_ablate_layers(args):
    cfg = _load(args)
    _print_table(runner.ablate_layers(cfg, _parse_ints(args.layers), jobs=args.jobs))


def cmd_ablate_gradflow(args):
    cfg = _load(args)
    _print_table(runner.ablate_gradflow(cfg, jobs=args.jobs))


def cmd_report(args):
    print(json.dumps(report.build_report(args.dir), indent=1))


def cmd_presets(args):
    for name in list_presets():
        print(name)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dosa", description=__doc__)
    p.add_argument("--version", action="version", version=f"dosa {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def experiment(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="YAML file or shipped preset name")
        sp.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        sp.add_argument("--out", help="output root (default: config 'output')")
        sp.add_argument("--loss", choices=("mm", "fmm"))
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--jobs", type=int, default=1, help="parallel seed processes")
        sp.set_defaults(func=fn)
        return sp

    experiment("run-mll", cmd_run_mll, "train and evaluate on all labels at once")
    experiment("run-cmll", cmd_run_cmll, "continual run over the configured task sequence")
    sp = experiment("ablate-layers", cmd_ablate_layers, "sweep the number of hidden layers")
    sp.add_argument("--layers", default="1,2,3,4,5")
    experiment("ablate-gradflow", cmd_ablate_gradflow,
               "compare gradient flow through the importance factor on/off")
    sp = sub.add_parser("report", help="aggregate results into CSV and SVG")
    sp.add_argument("--dir", required=True)
    sp.set_defaults(func=cmd_report)
    sp = sub.add_parser("presets", help="list shipped experiment presets")
    sp.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except DosaError as exc:
        sys.stderr.write(json.dumps({"error": exc.kind, "message": str(exc)}) + "\n")
        return 2
    except (OSError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

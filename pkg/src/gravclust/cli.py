"""Command-line entry point.

``gravclust run`` executes an experiment and writes CSV results plus a
manifest; ``gravclust export-stream`` writes a synthetic stream to CSV.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime or I/O error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from typing import List, Optional

import numpy as np

from . import __version__, datagen, harness
from .exceptions import ConfigError, InputError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # suppressed defaults: only flags actually given override the config file
    S = argparse.SUPPRESS
    p.add_argument("--config", help="flat key = value file; flags given here win")
    p.add_argument("--experiment", choices=harness.KINDS, default=S)
    p.add_argument("--dataset", choices=sorted(datagen.DATASETS), default=S)
    p.add_argument("--noise", choices=[n.value for n in datagen.Noise], default=S)
    p.add_argument("--contamination", default=S, help="none | chi2:<p_e> | gauss:<p_e>[:<variance>]")
    p.add_argument("--mode", choices=["both", "estimates", "non-coop"], default=S)
    p.add_argument("--runs", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--workers", type=int, default=S)
    p.add_argument("--vectors-per-phase", dest="vectors_per_phase", type=int, default=S)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p.add_argument("--clusters", type=int, default=S, help="number of dataset clusters to stream (0: all)")
    p.add_argument("--stationary", action="store_true", default=S,
                   help="all clusters active from the first vector")
    p.add_argument("--nodes", type=int, default=S)
    p.add_argument("--neighbors", type=int, default=S)
    p.add_argument("--node-pe", dest="node_pe", default=S, help="comma-separated outlier rate per node")
    p.add_argument("--sigmas", default=S, help="comma-separated emission spreads (convergence)")
    p.add_argument("--conv-steps", dest="conv_steps", type=int, default=S)
    p.add_argument("--conv-features", dest="conv_features", type=int, default=S)
    p.add_argument("--eps-min", dest="eps_min", type=float, default=S)
    p.add_argument("--control-mmin", dest="control_mmin", type=float, default=S)
    g = p.add_argument_group("clustering parameters")
    g.add_argument("--g", type=float, default=S)
    g.add_argument("--kdamp", type=float, default=S)
    g.add_argument("--eps-r", dest="eps_r", type=float, default=S)
    g.add_argument("--rx", type=float, default=S)
    g.add_argument("--mmin", type=float, default=S)
    g.add_argument("--dmax", type=float, default=S, help="force cutoff distance (inf disables)")
    g.add_argument("--p", default=S, help="constant exponent or 'adaptive'")
    g.add_argument("--dt", type=float, default=S)
    g.add_argument("--max-speed", dest="max_speed", type=float, default=S)
    g.add_argument("--core-radius", dest="core_radius", type=float, default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gravclust", description="Gravitational cluster enumeration experiments.")
    parser.add_argument("--version", action="version", version=f"gravclust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment and write CSV results")
    _add_run_flags(run)

    ex = sub.add_parser("export-stream", help="write one synthetic stream to CSV")
    ex.add_argument("--dataset", choices=sorted(datagen.DATASETS), default="data1")
    ex.add_argument("--noise", choices=[n.value for n in datagen.Noise], default="gaussian")
    ex.add_argument("--contamination", default="none")
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--vectors-per-phase", dest="vectors_per_phase", type=int, default=50)
    ex.add_argument("--stationary", action="store_true")
    ex.add_argument("--out", required=True, help="CSV file to write")
    return parser


def resolve_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(harness.read_config_file(args.config))
    names = {f.name for f in fields(harness.ExperimentConfig)}
    given = {k: v for k, v in vars(args).items() if k in names}
    values.update(given)
    # the late-cluster replay has its own data and outlier defaults
    if values.get("experiment") == "demo-fig1":
        values.setdefault("dataset", "fig1")
        values.setdefault("contamination", "chi2:0.05")
    if values.get("experiment") == "distributed":
        values.setdefault("dataset", "data2")
        values.setdefault("contamination", "gauss:0.05:3")
    return harness.config_from(values)


def _export(args) -> int:
    cfg = harness.config_from(dict(dataset=args.dataset, noise=args.noise, contamination=args.contamination,
                                   vectors_per_phase=args.vectors_per_phase, stationary=args.stationary,
                                   seed=args.seed))
    rng = np.random.default_rng([harness.run_seed(args.seed, 0), 1])
    items = datagen.make_stream(cfg.specs(), cfg.schedule(), cfg.contamination_spec(), rng)
    datagen.write_stream_csv(args.out, items)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"gravclust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        if args.command == "export-stream":
            return _export(args)
        cfg = resolve_config(args)
        result = harness.run_experiment(cfg)
    except (ConfigError, InputError) as exc:
        print(f"gravclust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"gravclust: I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"gravclust: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for k, v in result.items():
        if not isinstance(v, (dict, np.ndarray)):
            print(f"{k} = {v}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""``smcombat`` command line: simulate, fit, cmi, asa-bench.

Exit codes: 0 success, 2 usage/configuration, 3 input format, 4 numeric or
degenerate data.  Failures print a single ``smcombat: error: ...`` line.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import asa, io, svg
from .errors import SmcError, UsageError
from .fit import fit_ensemble
from .momenta import ensemble_cmi
from .simulator import ensemble as simulate_ensemble

log = logging.getLogger("smcombat")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer: {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _global_flags() -> argparse.ArgumentParser:
    # defaults are SUPPRESS so a flag given before or after the subcommand both work
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="JSON run configuration")
    p.add_argument("--seed", type=_u64, metavar="U64", default=argparse.SUPPRESS,
                   help="master seed (simulate) or optimizer seed (fit, asa-bench)")
    p.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--threads", type=_positive_int, metavar="N", default=argparse.SUPPRESS,
                   help="worker threads; outputs do not depend on it")
    p.add_argument("--svg", action="store_true", default=argparse.SUPPRESS, help="also write an SVG chart")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="progress logging")
    return p


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags()
    parser = _Parser(prog="smcombat", parents=[flags],
                     description="Statistical mechanics of combat: simulate, fit and analyse attrition data.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", parents=[flags], help="generate a synthetic ensemble CSV")
    p.add_argument("--runs", type=_positive_int, help="number of runs (default 6)")
    p.add_argument("--epochs", type=_positive_int, help="epochs per run (default 10)")
    p.add_argument("--substeps", type=_positive_int, help="Euler-Maruyama substeps per epoch (default 10)")
    p.add_argument("--noise", type=float, help="multiplier applied to every noise coefficient (0 = deterministic)")
    p.add_argument("--stepping", choices=("M", "logM"), help="integrate counts or log-counts")

    p = sub.add_parser("fit", parents=[flags], help="fit coefficients to an ensemble CSV")
    p.add_argument("data", nargs="?", help="ensemble CSV (default: io.data from the config)")
    p.add_argument("--coordinates", choices=("M", "logM"), help="likelihood coordinates")
    p.add_argument("--max-generated", type=_positive_int, help="ASA budget of generated points")
    p.add_argument("--no-polish", action="store_true", help="skip the simplex polish after ASA")

    p = sub.add_parser("cmi", parents=[flags], help="canonical momenta indicators for an ensemble")
    p.add_argument("data", nargs="?", help="ensemble CSV (default: io.data)")
    p.add_argument("theta", nargs="?", help="coefficient JSON, e.g. fit.json (default: io.theta)")

    p = sub.add_parser("asa-bench", parents=[flags], help="run ASA on a benchmark function")
    p.add_argument("function", help=f"one of: {', '.join(sorted(asa.BENCHMARKS))}")
    p.add_argument("--dims", type=_positive_int, default=4, help="dimension (default 4)")
    p.add_argument("--max-generated", type=_positive_int, help="budget of generated points")
    return parser


def _setup(args):
    cfg = io.load_config(args.config) if getattr(args, "config", None) else io.RunConfig()
    out = Path(getattr(args, "out", None) or cfg.io.out)
    return cfg, io.ensure_dir(out), getattr(args, "threads", 1), getattr(args, "svg", False)


def cmd_simulate(args) -> int:
    cfg, out, threads, want_svg = _setup(args)
    sim = cfg.sim_config(n_runs=args.runs, n_epochs=args.epochs, substeps_per_epoch=args.substeps,
                         noise=args.noise, stepping=args.stepping, master_seed=getattr(args, "seed", None))
    ens = simulate_ensemble(sim, threads)
    io.write_ensemble_csv(ens, out / "ensemble.csv")
    if want_svg:
        mean = ens.mean_counts()
        chart = svg.line_chart(ens[0].t, {u: mean[:, i] for i, u in enumerate(ens.units)},
                               title=f"Mean unit counts over {len(ens)} runs", xlabel="t (min)", ylabel="units")
        io.write_text(out / "ensemble.svg", chart)
    print(out / "ensemble.csv")
    return 0


def _data_path(args, cfg):
    path = args.data or cfg.io.data
    if not path:
        raise UsageError("no data file given (positional argument or io.data in the config)")
    return path


def cmd_fit(args) -> int:
    cfg, out, threads, _ = _setup(args)
    ens = io.read_ensemble_csv(_data_path(args, cfg), cfg.spec)
    config = cfg.asa_config(seed=getattr(args, "seed", None), max_generated=args.max_generated)
    report = fit_ensemble(ens, cfg.spec, config, coordinates=args.coordinates or cfg.fit.coordinates,
                          count_floor=cfg.fit.count_floor, threads=threads,
                          polish=cfg.fit.polish and not args.no_polish, max_polish=cfg.fit.max_polish)
    io.write_fit_outputs(report, out)
    sys.stdout.write(io.report_text(report))
    log.info("fit wall time %.2f s", report.wall_time)
    return 0


def cmd_cmi(args) -> int:
    cfg, out, _, want_svg = _setup(args)
    theta_path = args.theta or cfg.io.theta
    if not theta_path:
        raise UsageError("no coefficient file given (positional argument or io.theta in the config)")
    ens = io.read_ensemble_csv(_data_path(args, cfg), cfg.spec)
    theta = io.load_theta(theta_path, cfg.spec)
    series = ensemble_cmi(ens, theta, cfg.spec, cfg.fit.count_floor)
    io.write_text(out / "cmi.csv", io.cmi_csv(series, cfg.spec.unit_names))
    io.write_text(out / "cmi_energy.csv", io.cmi_energy_csv(series))
    if want_svg:
        mean = series[-1]
        chart = svg.line_chart(mean.t, {u: mean.pi[:, i] for i, u in enumerate(cfg.spec.unit_names)},
                               title="Mean canonical momenta", xlabel="t (min)", ylabel="CMI")
        io.write_text(out / "cmi.svg", chart)
    print(out / "cmi.csv")
    return 0


def cmd_asa_bench(args) -> int:
    cfg, out, _, want_svg = _setup(args)
    if args.function not in asa.BENCHMARKS:
        raise UsageError(f"unknown benchmark {args.function!r}; known: {', '.join(sorted(asa.BENCHMARKS))}")
    fn, (lo, hi) = asa.BENCHMARKS[args.function]
    config = cfg.asa_config(seed=getattr(args, "seed", None), max_generated=args.max_generated)
    result = asa.minimize(fn, (np.full(args.dims, lo), np.full(args.dims, hi)), config)
    io.write_text(out / "asa_trace.csv", io.trace_csv(result.trace))
    if want_svg:
        tr = np.array(result.trace, dtype=float)
        chart = svg.line_chart(tr[:, 0], {"best_cost": tr[:, 2]}, title=f"ASA on {args.function}",
                               xlabel="generated", ylabel="best cost")
        io.write_text(out / "asa_trace.svg", chart)
    print(f"{args.function}: best cost {io.fmt(result.cost)} after {result.generated} generated "
          f"({result.stopped_by})")
    return 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cmi": cmd_cmi, "asa-bench": cmd_asa_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except SmcError as exc:
        msg = " ".join(str(exc).split())
        print(f"smcombat: error: {msg}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

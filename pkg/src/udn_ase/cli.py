"""Command line entry point: ``udn-ase run --config FILE`` or ``udn-ase scenario NAME``."""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import sweep
from .errors import ConfigError

log = logging.getLogger("udn_ase")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def _build_parser():
    parser = argparse.ArgumentParser(prog="udn-ase", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep described by a YAML config")
    run.add_argument("--config", required=True)
    _output_args(run)

    scen = sub.add_parser("scenario", help="run a bundled scenario")
    scen.add_argument("name", choices=sweep.SCENARIOS)
    scen.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    _output_args(scen)

    sub.add_parser("list", help="list bundled scenarios")
    return parser


def _output_args(p):
    p.add_argument("--out", help="output file (default: stdout or the config's output.path)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--threads", type=int, help=f"worker processes (env {sweep.THREADS_ENV})")


def _write(rows, out, fmt):
    if out:
        sweep.emit(rows, out, fmt)
        log.info("wrote %d rows to %s", len(rows), out)
    else:
        sys.stdout.write(sweep.render(rows, fmt))


def _report_disagreements(rows, trials):
    for scenario, density, exact, est, ci, agrees in sweep.cross_check(rows, trials=trials):
        if not agrees:
            log.warning("%s lambda=%g: analytic %.6g vs Monte Carlo %.6g (ci %.3g) differ by more than 3 sigma",
                        scenario, density, exact, est, ci)


def _status(rows):
    failed = [r for r in rows if r.error]
    for r in failed:
        log.warning("%s %s lambda=%g failed: %s", r.scenario, r.engine, r.lambda_per_km2, r.error)
    if not failed:
        return EXIT_OK
    if len(failed) == len(rows):
        log.error("every point failed")
        return EXIT_CONFIG
    return EXIT_PARTIAL


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "list":
        for name in sweep.SCENARIOS:
            print(name)
        return EXIT_OK

    start = time.perf_counter()
    if args.command == "run":
        try:
            with open(args.config, encoding="utf-8") as fh:
                spec = sweep.parse_config(fh.read())
        except (OSError, ConfigError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        rows = sweep.run_sweep(spec, args.threads)
        out = args.out or spec.output_path
        fmt = args.format or spec.output_format
        trials = spec.mc_trials
    else:
        rows = sweep.run_scenario(args.name, args.threads, mc_trials=args.trials)
        out = args.out
        fmt = args.format or "csv"
        trials = args.trials or sweep.scenario_specs(args.name)[0].mc_trials

    try:
        _write(rows, out, fmt)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _report_disagreements(rows, trials)
    log.info("finished %d points in %.1f s", len(rows), time.perf_counter() - start)
    return _status(rows)


if __name__ == "__main__":
    sys.exit(main())

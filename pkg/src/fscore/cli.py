"""Command line front-end.

    fscore run CONFIG.json [--out DIR]
    fscore plot RESULTS.csv --kind {residual_vs_h,objective_vs_iteration,constant_vs_case}

Exit status: 0 success, 1 failed verification / unconverged fit, 2 bad config.
"""

import argparse
import json
import logging
import sys

from .config import load_config
from .errors import ConfigError, FScoreError, MissingColumn
from .plotdata import KINDS, emit_plot_data
from .runner import run_experiment

log = logging.getLogger("fscore")


def _build_parser():
    parser = argparse.ArgumentParser(prog="fscore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    plot = sub.add_parser("plot", help="emit plot-ready series from a results CSV")
    plot.add_argument("results")
    plot.add_argument("--kind", required=True, choices=sorted(KINDS))
    plot.add_argument("--out", default=None)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            log.error("ConfigError: %s", exc)
            return 2
        try:
            code, paths = run_experiment(cfg, args.out)
        except ConfigError as exc:
            log.error("ConfigError: %s", exc)
            return 2
        except FScoreError as exc:
            log.error("%s: %s", type(exc).__name__, exc)
            return 1
        log.info("wrote %s", paths["results_csv"])
        with open(paths["manifest"]) as fh:
            log.info("summary: %s", json.dumps(json.load(fh)["summary"]))
        return code
    try:
        path, info = emit_plot_data(args.results, args.kind, args.out)
    except (MissingColumn, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    log.info("wrote %s %s", path, json.dumps(info))
    return 0


if __name__ == "__main__":
    sys.exit(main())

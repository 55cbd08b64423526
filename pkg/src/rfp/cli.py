"""Command-line entry point.

Subcommands:
    rfp run <config>            time-march a configuration
    rfp mms <config>            manufactured-solution convergence study
    rfp predict-study <config>  predicted vs. unpredicted refinement study

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, apply_overrides, load_config
from .integrators import SolverError

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfp",
        description="Adaptive momentum-space solver for the relativistic "
                    "electron kinetic equation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "time-march a configuration"),
                           ("mms", "manufactured-solution convergence study"),
                           ("predict-study", "indicator-prediction study")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="path to a key = value config file")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for the flux kernels")
        p.add_argument("--output-dir", default=None,
                       help="directory for CSV/VTK/JSON outputs")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="config override (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def set_threads(n: int) -> None:
    import numba
    numba.set_num_threads(max(1, n))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.override:
            cfg = apply_overrides(cfg, args.override)
        if args.threads is not None:
            cfg.threads = args.threads
        if args.output_dir is not None:
            cfg.output_dir = args.output_dir
        cfg.validate()
    except (OSError, ConfigError) as err:
        print(f"rfp: configuration error: {err}", file=sys.stderr)
        return 2

    set_threads(cfg.threads)
    out = cfg.output_dir
    Path(out).mkdir(parents=True, exist_ok=True)

    from . import drivers
    try:
        if args.command == "run":
            state = drivers.run_simulation(cfg, output_dir=out)
            logger.info("run finished: %d steps, %d cells, mass %.12e",
                        state.summary["steps"], state.summary["n_cells"],
                        state.summary["total_mass"])
        elif args.command == "mms":
            rows = drivers.run_mms_convergence(cfg, output_dir=out)
            for row in rows:
                logger.info("levels %s: %d cells, error %.6e (ratio %.3f)",
                            row["levels"], row["n_cells"], row["error"],
                            row["ratio"])
        else:
            rows = drivers.run_prediction_study(cfg, output_dir=out)
            for row in rows:
                logger.info("rf=%d: indicator ratio %.3f, cell inflation %.3f",
                            row["rf"], row["chi_ratio"], row["cell_inflation"])
    except SolverError as err:
        print(f"rfp: solver failure: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

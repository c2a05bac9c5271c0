# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

import argparse
import json
import logging
import sys
import typing

from rlkd._exceptions import ConfigurationError, RLKDError
from rlkd._experiment import compare, emit_plot_data, generate_data, load_experiment_config, run_experiment

log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _run(
    args: argparse.Namespace,
) -> None:
    config = load_experiment_config(args.config)
    report = run_experiment(config, args.out, workers=args.workers)
    summary = report["summary"]["test_accuracy"]
    print(f"{report['method']}: test accuracy {100 * summary['mean']:.2f} +- {100 * summary['stdev']:.3f}")


def _compare(
    args: argparse.Namespace,
) -> None:
    comparison = compare(args.reports, args.out)
    for p in comparison["pairwise"]:
        p_text = "n/a" if p["p_value"] is None else f"{p['p_value']:.4g}"
        print(f"{p['first']} vs {p['second']}: p={p_text}")


def _gen_data(
    args: argparse.Namespace,
) -> None:
    try:
        with open(args.spec, mode="r", encoding="utf-8") as fd:
            spec = json.load(fd)
    except OSError as e:
        raise ConfigurationError("spec", f"cannot be read from '{args.spec}': {e.strerror or e}") from e
    except ValueError as e:
        raise ConfigurationError("spec", f"is not valid JSON: {e}") from e

    for path in generate_data(spec, args.out):
        print(path)


def _plot_data(
    args: argparse.Namespace,
) -> None:
    for path in emit_plot_data(args.trace, args.out):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlkd",
        description="Reinforced teacher selection for knowledge distillation experiments.",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level of the run (default: %(default)s)",
    )
    verbs = parser.add_subparsers(dest="verb", required=True)

    run = verbs.add_parser("run", help="Run every seed of an experiment config and write its report")
    run.add_argument("--config", required=True, help="Experiment config JSON file")
    run.add_argument("--out", required=True, help="Output directory")
    run.add_argument("--workers", type=int, default=1, help="Number of seeds run concurrently")
    run.set_defaults(func=_run)

    comp = verbs.add_parser("compare", help="Compare reports with Welch t-tests")
    comp.add_argument("--reports", required=True, nargs="+", help="Report files of the same benchmark")
    comp.add_argument("--out", required=True, help="Output directory")
    comp.set_defaults(func=_compare)

    gen = verbs.add_parser("gen-data", help="Write a synthetic benchmark to JSON lines files")
    gen.add_argument("--spec", required=True, help="Benchmark spec JSON file")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.set_defaults(func=_gen_data)

    plot = verbs.add_parser("plot-data", help="Write the series of run traces as CSV")
    plot.add_argument("--trace", required=True, nargs="+", help="Run trace files")
    plot.add_argument("--out", required=True, help="Output directory")
    plot.set_defaults(func=_plot_data)

    return parser


def main(
    argv: typing.Optional[typing.List[str]] = None,
) -> int:
    """Entry point of the ``rlkd`` command.

    Returns:
        int: 0 on success, 1 when the command failed.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        args.func(args)
    except RLKDError as e:
        log.debug("Command %s failed", args.verb, exc_info=True)
        print(f"rlkd {args.verb}: {e}", file=sys.stderr)
        return 1

    return 0

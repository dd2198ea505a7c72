#!/usr/bin/env python3
"""
Markov Certification Toolkit
============================

Command-line entry point: certify a model file, compute its envelopes,
simulate decay tables, or produce the full verified report.

Exit codes: 0 all validations pass, 1 an expected certificate could not
be obtained, 2 a certified envelope failed validation, 3 input error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from modules.certifier import Certifier
from modules.harness import Harness
from modules.model_loader import ModelLoader, ModelValidationError, list_fixtures
from modules.reporter import Reporter
from modules.utils import dump_json, load_config, merge_config, setup_logging


DEFAULT_CONFIG = Path(__file__).resolve().parent / "config" / "config.yaml"

EXIT_OK = 0
EXIT_INPUT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Certify convergence envelopes of finite Markov kernels and generators"
    )
    parser.add_argument("--config", default=str(DEFAULT_CONFIG), help="Path to the configuration file")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="Output directory for reports and CSVs (default: stdout)")
    common.add_argument("--tol", type=float, help="Relative slack for envelope validation")
    common.add_argument("--seed", type=int, help="Seed for the random measures")
    common.add_argument("--n-max", type=int, help="Discrete horizon")
    common.add_argument("--t-max", type=float, help="Continuous horizon")
    common.add_argument("--grid-size", type=int, help="Number of time grid points")

    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("certify", "Extract every applicable certificate"),
                            ("rate", "Certificates plus envelopes and rate tables"),
                            ("simulate", "Decay tables of random zero-mean measures"),
                            ("report", "Certify, rate, simulate and validate")):
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("model", help="Model JSON file")
        if name == "simulate":
            sub.add_argument("--count", type=int, default=1, help="Number of measures")
    commands.add_parser("suite", parents=[common], help="Run report over every shipped fixture")
    return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """CLI flags as a config overlay; unset flags keep the file values."""
    overlay = {
        "harness": {"slack": args.tol, "seed": args.seed, "n_max": args.n_max,
                    "t_max": args.t_max, "t_points": args.grid_size},
        "subgeometric": {"n_max": args.n_max},
        "continuous": {"drift_points": args.grid_size},
    }
    return {section: {k: v for k, v in values.items() if v is not None}
            for section, values in overlay.items()}


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, key) for key in ("tol", "seed", "n_max", "t_max", "grid_size")
            if getattr(args, key, None) is not None}


def _emit(text: str, out: Optional[str], filename: str):
    if out:
        path = Path(out) / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def run_model(command: str, model_path: str, config: Dict[str, Any], args: argparse.Namespace) -> int:
    """Run one subcommand on one model file and return its exit code."""
    logger = logging.getLogger(__name__)
    model = ModelLoader(config).load(model_path)
    harness = Harness(config)
    reporter = Reporter(config)
    seed = int(harness.settings["seed"])

    if command == "simulate":
        nus = harness.random_measures(model.size, args.count)
        norms = [("tv", None)] + ([("v1", model.V)] if model.V is not None else []) \
            + ([("v2", model.V2)] if model.V2 is not None else [])
        for index, nu in enumerate(nus):
            if model.continuous:
                t_max = float(harness.settings["t_max"])
                points = int(harness.settings["t_points"])
                decay = harness.simulate_continuous(model.generator, nu,
                                                    [t_max * (k + 1) / points for k in range(points)], norms)
            else:
                decay = harness.simulate_decay(model.kernel, nu, int(harness.settings["n_max"]), norms)
            frame = reporter.decay_frame(decay)
            if args.out:
                reporter.save_decay_csv(frame, str(Path(args.out) / f"{model.name}_decay_{index}.csv"))
            else:
                frame.to_csv(sys.stdout, index=False, float_format="%.17g", lineterminator="\n")
        return EXIT_OK

    certifier = Certifier(config)
    run = certifier.certify(model, envelopes=command in ("rate", "report"), verify=command == "report")
    report = reporter.generate_report(run, seed, _flags(args))
    _emit(dump_json(report), args.out, f"{model.name}_report.json")

    if args.out and command == "rate":
        horizon = harness.settings["t_max"] if model.continuous else harness.settings["n_max"]
        reporter.export_rate_tables(run, args.out, horizon)
    if args.out and command == "report":
        reporter.export_decay_tables(run, harness, args.out)

    code = run.exit_code
    marker = "✅" if code == EXIT_OK else "❌"
    logger.info(f"{marker} {command} {model.name}: exit code {code}")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, load and merge the configuration, dispatch.

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)
    logger = logging.getLogger(__name__)

    try:
        config = merge_config(load_config(args.config), flag_overrides(args))
        if not args.verbose:
            logging.getLogger().setLevel(config.get("logging", {}).get("level", "INFO"))
        if args.command == "suite":
            codes = []
            for fixture in list_fixtures():
                logger.info(f"Suite: {fixture.name}")
                codes.append(run_model("report", str(fixture), config, args))
            return max(codes, default=EXIT_OK)
        return run_model(args.command, args.model, config, args)
    except (ModelValidationError, FileNotFoundError, ValueError) as exc:
        logger.error(f"Input error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

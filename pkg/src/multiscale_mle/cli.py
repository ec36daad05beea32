"""
CLI for multiscale-mle: simulate, estimate, sweep, bias, limits.
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from .errors import (
    ConfigError,
    InconclusiveCalibrationError,
    ModelError,
    MultiscaleError,
    NumericalError,
    ReplicateError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4

SUBCOMMANDS = ("simulate", "estimate", "sweep", "bias", "limits")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ReplicateError):
        return exit_code(exc.cause)
    if isinstance(exc, InconclusiveCalibrationError):
        return EXIT_INCONCLUSIVE
    if isinstance(exc, (ConfigError, ModelError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multiscale-mle",
        description="Drift estimation from multiscale diffusion data.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file or a manifest.json to rerun")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=lambda s: int(s, 0), help="base seed (u64)")
        p.add_argument("--replicates", type=int, help="number of replicates")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    from .config import load_config
    from .experiments import COMMANDS
    from .paths import get_output_dir

    try:
        cfg = load_config(args.config).with_overrides(
            base_seed=args.seed, replicates=args.replicates, output_dir=args.out,
        )
        out_dir = get_output_dir(args.out, cfg.output_dir)
        summary = COMMANDS[args.command](cfg, out_dir)
    except MultiscaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(f"Output dir: {summary.out_dir}")
    if summary.steps:
        print(f"Steps: {summary.steps}")
    for key in ("coarse_argmax", "full_argmax"):
        if key in summary.results:
            flag = " (boundary)" if summary.results.get(f"{key}_at_boundary") else ""
            print(f"{key}: {summary.results[key]:.6g}{flag}")
    print(f"Wall time: {summary.wall_time:.2f}s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""
Command-line entry point.

    pc2 train  --config run.json [--out DIR] [--seed N]
    pc2 sweep  --config run.json [--out DIR] [--seed N] [--threads N]
    pc2 uq     --model model.bin --problem NAME --grid x=0:1:51 [--grid t=1] [--out DIR]
    pc2 verify [--quick] [--check N ...]

Exit status: 0 on success, 1 when verify has failing checks, 2 for
configuration errors, 3 for any other failure during fitting or I/O.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace

from pc2 import __version__
from pc2.config import ConfigError, parse_config
from pc2.errors import Pc2Error
from pc2.experiments import run_sweep, run_train, run_uq
from pc2.model_io import read_model
from pc2.problems import PROBLEMS, get_problem
from pc2.verify import all_passed, format_table, run_checks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2
EXIT_FAILURE = 3


def _threads(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("PC2_THREADS")
    if env is None:
        return 1
    try:
        threads = int(env)
    except ValueError:
        raise ConfigError(f"PC2_THREADS: expected an integer, got {env!r}") from None
    if threads < 1:
        raise ConfigError(f"PC2_THREADS: expected a positive integer, got {threads}")
    return threads


def _load(args: argparse.Namespace):
    config = parse_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config, args.out or config.output_dir


def cmd_train(args: argparse.Namespace) -> int:
    config, out = _load(args)
    outcome = run_train(config, out)
    print(f"{outcome.cell.variant.label}: test MSE {outcome.report.mse:.3e}, written to {out}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config, out = _load(args)
    rows = run_sweep(config, out, threads=_threads(args.threads))
    print(f"{len(rows)} runs written to {out}")
    return EXIT_OK


def cmd_uq(args: argparse.Namespace) -> int:
    stored = read_model(args.model)
    problem = get_problem(args.problem)
    out = args.out or "pc2_output"
    written = run_uq(
        stored.model,
        problem,
        args.grid or [],
        out,
        seed=args.seed or 0,
        n_reference=args.n_reference,
        n_fields=args.n_fields,
    )
    for path in written.values():
        print(path)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_checks(quick=args.quick, only=args.check)
    print(format_table(results))
    return EXIT_OK if all_passed(results) else EXIT_CHECKS_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pc2", description="Physics-informed polynomial chaos experiments")
    parser.add_argument("--version", action="version", version=f"pc2 {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (created if missing)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    train = sub.add_parser("train", help="fit one model and write model.bin")
    common(train)
    train.set_defaults(handler=cmd_train)

    sweep = sub.add_parser("sweep", help="train over methods, counts and repeats")
    common(sweep)
    sweep.add_argument("--threads", type=int, help="parallel cells (default: PC2_THREADS or 1)")
    sweep.set_defaults(handler=cmd_sweep)

    uq = sub.add_parser("uq", help="mean and standard deviation fields of a model")
    common(uq, config=False)
    uq.add_argument("--model", required=True, help="model.bin written by train")
    uq.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    uq.add_argument(
        "--grid", action="append", metavar="NAME=LO:HI:N",
        help="grid for one deterministic dimension; NAME=VALUE pins it (repeatable)",
    )
    uq.add_argument("--n-reference", type=int, default=32, help="reference samples for the error file")
    uq.add_argument("--n-fields", type=int, default=0, help="fresh realizations for generalization.csv")
    uq.set_defaults(handler=cmd_uq)

    verify = sub.add_parser("verify", help="run the acceptance suite")
    verify.add_argument("--quick", action="store_true", help="reduced sizes; skips the slow checks")
    verify.add_argument("--check", type=int, action="append", help="run only this check (repeatable)")
    verify.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    verify.set_defaults(handler=cmd_verify)
    return parser


def configure_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("pc2")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.WARNING)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Pc2Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

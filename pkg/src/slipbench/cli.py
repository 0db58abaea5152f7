"""Command-line front end.

    slipbench generate --catalogue default --seed 7 --out runs/demo
    slipbench prepare  --out runs/demo
    slipbench tune     --out runs/demo
    slipbench train    --out runs/demo
    slipbench run      --out runs/demo
    slipbench evaluate --out runs/demo
    slipbench report   --out runs/demo
    slipbench selftest

Flags override config-file values, which override built-in defaults.
Verbosity comes from the SLIPBENCH_LOG environment variable (debug,
info, warning, error; default warning). Exit codes: 0 success, 1
pipeline failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .checks import run_selftest
from .config import CATALOGUES, ESTIMATORS, RunConfig, apply_overrides, load_config
from . import pipeline

log = logging.getLogger("slipbench")

_STAGES = {
    "generate": pipeline.stage_generate,
    "prepare": pipeline.stage_prepare,
    "tune": pipeline.stage_tune,
    "train": pipeline.stage_train,
    "run": pipeline.stage_run,
    "evaluate": pipeline.stage_evaluate,
    "report": pipeline.stage_report,
}


def _estimator_list(text: str) -> tuple[str, ...]:
    names = tuple(e.strip() for e in text.split(",") if e.strip())
    unknown = [e for e in names if e not in ESTIMATORS]
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown estimators: {', '.join(unknown)} (choose from {', '.join(ESTIMATORS)})"
        )
    if not names:
        raise argparse.ArgumentTypeError("estimator list is empty")
    return names


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="JSON config file")
    shared.add_argument("--seed", type=int, help="master seed override")
    shared.add_argument("--out", metavar="DIR", help="run directory override")
    shared.add_argument(
        "--estimators",
        type=_estimator_list,
        metavar="LIST",
        help="comma-separated estimator subset",
    )
    shared.add_argument(
        "--input-set",
        choices=("i1", "i2"),
        help="restrict to inertial-only (i1) or tyre-augmented (i2) estimators",
    )

    parser = argparse.ArgumentParser(
        prog="slipbench",
        description="Sideslip-estimation benchmark pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    gen = sub.add_parser("generate", parents=[shared], help="simulate the manoeuvre catalogue")
    gen.add_argument("--catalogue", choices=CATALOGUES, help="catalogue preset")
    for name in ("prepare", "tune", "train", "run", "evaluate", "report"):
        sub.add_parser(name, parents=[shared], help=f"{name} stage")
    sub.add_parser("selftest", help="run the built-in oracle suites")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        config = load_config(args.config)
    else:
        # Reuse the snapshot generate left in the run directory, so later
        # stages stay consistent without repeating every flag.
        out_dir = args.out or RunConfig().out_dir
        snapshot = os.path.join(out_dir, "config.json")
        config = load_config(snapshot) if os.path.exists(snapshot) else RunConfig()
    return apply_overrides(
        config,
        seed=args.seed,
        out=args.out,
        estimators=args.estimators,
        input_set=args.input_set,
        catalogue=getattr(args, "catalogue", None),
    )


def _run_selftest() -> int:
    results = run_selftest()
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name}: {r.detail}  [{r.elapsed:.1f} s]")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"selftest: {len(failed)} of {len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"selftest: all {len(results)} checks passed")
    return 0


def main(argv=None) -> int:
    level = os.environ.get("SLIPBENCH_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage problems itself
        return int(exc.code) if exc.code is not None else 0

    if args.command == "selftest":
        return _run_selftest()

    try:
        config = _resolve_config(args)
        _STAGES[args.command](config)
    except Exception as exc:  # noqa: BLE001 - boundary: qualify and exit 1
        module = type(exc).__module__
        print(
            f"slipbench {args.command}: {module}.{type(exc).__name__}: {exc}",
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface: ``qwalk run|plot|selftest``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .basis import LinearDependenceError
from .experiments import (
    OUT_DIR_ENV,
    ConfigError,
    InvariantViolation,
    emit_plot_script,
    load_config,
    run,
    selftest,
)

DEFAULT_OUT_DIR = "qwalk-results"


def _resolve_out_dir(flag_value) -> Path:
    if flag_value is not None:
        return Path(flag_value)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(DEFAULT_OUT_DIR)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qwalk",
        description="Simulate quantum walks built from prescribed eigenbases and spectra.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config, write CSVs and a manifest")
    run_p.add_argument("config", help="path to a JSON experiment config")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument(
        "--out-dir",
        default=None,
        help=f"output directory (default: ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})",
    )
    run_p.add_argument("--threads", type=int, default=1, help="transition pairs run in parallel")

    plot_p = sub.add_parser("plot", help="emit a plot script from one or more run manifests")
    plot_p.add_argument("manifests", nargs="+", help="manifest.json files, one panel each")
    plot_p.add_argument("--out", default=None, help="path of the generated script")

    sub.add_parser("selftest", help="run the built-in numerical invariant suite")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config, seed_override=args.seed)
            manifest = run(config, _resolve_out_dir(args.out_dir), threads=args.threads)
            print(f"wrote {manifest}")
            return 0
        if args.command == "plot":
            script = emit_plot_script(args.manifests, args.out)
            print(f"wrote {script}")
            return 0
        failures = selftest()
        return 0 if failures == 0 else 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 3
    except LinearDependenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src.cli.config import KINDS, load_experiment
from src.cli.experiments import run_experiment
from src.cli.reports import emit
from src.utils.errors import ConfigError, InfeasibleError, StateSpaceError, TwoWayError, ValidationError
from src.utils.logging_setup import setup_logging

log = logging.getLogger("scripts.run_experiment")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Two-way lossy communication experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in KINDS:
        p = sub.add_parser(verb, help=f"run a {verb} experiment")
        p.add_argument("--config", type=str, default=None, help="YAML experiment config (default: $CONFIG_PATH)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=str, default=None, help="output directory (overrides $TWOWAY_OUT_DIR)")
        p.add_argument("--tol", type=float, default=None, help="numerical tolerance")
        p.add_argument("--workers", type=int, default=None, help="threads for independent work items")
        p.add_argument("--log-level", type=str, default="INFO")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    overrides = {
        "experiment": args.verb,
        "seed": args.seed,
        "tol": args.tol,
        "workers": args.workers,
        "out_dir": args.out,
    }
    try:
        cfg = load_experiment(args.config, overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = run_experiment(cfg)
    except InfeasibleError as e:
        print(f"infeasible: {e} (minimal achievable: {e.minimal})", file=sys.stderr)
        return EXIT_FAILED
    except StateSpaceError as e:
        print(f"state space too large: {e} (required {e.required}, ceiling {e.ceiling})", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as e:
        print(f"invalid experiment: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TwoWayError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILED

    written = emit(result, cfg, Path(cfg.output.out_dir))
    print("\n".join(result.summary))
    print(f"\nwrote {', '.join(str(p) for p in written)}")
    if not result.ok:
        log.error("%s reported a failed check", cfg.experiment)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

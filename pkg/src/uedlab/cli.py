"""Command-line entry point.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime abort.
Set UEDLAB_WORKERS to override the number of environments per iteration.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, harness
from .checkpoint import CheckpointError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uedlab",
        description="Regret-driven adversarial maze curricula: train agents, "
                    "evaluate zero-shot transfer, solve decision matrices, "
                    "and plot run metrics.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a training experiment")
    train.add_argument("--config", required=True, help="JSON config file")
    train.add_argument("--seed", type=int, default=None,
                       help="train this single seed instead of the config list")
    train.add_argument("--strategy", default=None,
                       help="override the config's strategy")
    train.add_argument("--out", default=None, help="output run directory")

    ev = sub.add_parser("eval", help="zero-shot transfer evaluation")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--suite", default=None,
                    help="directory of map files (default: bundled suite)")
    ev.add_argument("--trials", type=int, default=10,
                    help="episodes per map per seed")
    ev.add_argument("--seeds", type=int, default=5, help="number of eval seeds")
    ev.add_argument("--horizon", type=int, default=None,
                    help="episode step cap (default: 250)")

    dec = sub.add_parser("decide", help="solve a payoff matrix")
    dec.add_argument("--game", required=True, help="payoff CSV file")
    dec.add_argument("--rule", required=True,
                     choices=sorted(harness.DECISION_RULES))
    dec.add_argument("--regret", action="store_true",
                     help="also print the regret matrix")
    dec.add_argument("--distributions", action="store_true",
                     help="also print the per-policy parameter distributions")

    plot = sub.add_parser("plot", help="render metric curves from a run")
    plot.add_argument("--run", required=True, help="run directory")
    plot.add_argument("--out", default=None,
                      help="output directory (default: <run>/plots)")
    return parser


def _cmd_train(args) -> int:
    config = harness.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.strategy is not None:
        overrides["strategy"] = args.strategy
    if overrides:
        data = config.to_dict()
        data.update(overrides)
        config = harness.parse_config(data, source=args.config)
    run_dir = harness.cli_train(config, out_dir=args.out)
    print(f"run written to {run_dir}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    rows = harness.cli_eval(args.checkpoint, args.suite,
                            trials_per_map=args.trials, n_seeds=args.seeds,
                            horizon=args.horizon)
    print(harness.format_eval_table(rows))
    return EXIT_OK


def _cmd_decide(args) -> int:
    print(harness.cli_decide(args.game, args.rule, show_regret=args.regret,
                             show_lambda=args.distributions))
    return EXIT_OK


def _cmd_plot(args) -> int:
    for path in harness.cli_plot(args.run, out_dir=args.out):
        print(path)
    return EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "decide": _cmd_decide,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (harness.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, ArithmeticError, RuntimeError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

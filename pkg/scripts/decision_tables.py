#!/usr/bin/env python3
"""Prints every decision rule's choice on the two bundled payoff matrices,
plus the regret matrices and the minimax-regret parameter distributions."""

from importlib import resources

from uedlab import harness


def main():
    games_dir = resources.files("uedlab") / "games"
    for name in ("small_game", "big_game"):
        path = games_dir / f"{name}.csv"
        print(f"== {name} ==")
        for rule in sorted(harness.DECISION_RULES):
            print(harness.cli_decide(path, rule,
                                     show_regret=(rule == "minimax_regret"),
                                     show_lambda=(rule == "minimax_regret")))
        print()


if __name__ == "__main__":
    main()

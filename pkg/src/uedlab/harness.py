"""Experiment harness: config files, run logging, checkpoints, zero-shot
transfer evaluation on the bundled maps, and metric plots.

A run directory is self-describing: manifest.json carries the full config,
its hash, the seed list, and the code version, so eval and plotting can be
reproduced from the directory alone.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_policy, save_policy
from .core import Trajectory
from .decision import (
    GameMatrix,
    construct_lambda_mr,
    insufficient_reason,
    load_game_csv,
    maximin,
    minimax_regret,
    regret_matrix,
)
from .gridworld import MazeEnv, grid_metrics, parse_map
from .learner import OptimConfig, PolicyHandle, run_episode
from .strategies import (
    STRATEGIES,
    TrainState,
    UEDConfig,
    init_train_state,
    run_iteration,
)

SCHEMA_VERSION = 1
WORKERS_ENV_VAR = "UEDLAB_WORKERS"

METRICS_COLUMNS = [
    "seed",
    "iteration",
    "num_blocks",
    "distance_to_goal",
    "passable_path_length",
    "solved_path_length",
    "regret_raw",
    "regret_clamped",
    "protagonist_return",
    "antagonist_return",
]

TRANSFER_MAPS = ("empty", "fifty_blocks", "four_rooms", "sixteen_rooms",
                 "labyrinth", "maze")

DECISION_RULES = {
    "maximin": maximin,
    "insufficient_reason": insufficient_reason,
    "minimax_regret": minimax_regret,
}

#: roles whose network preset must be declared per strategy
REQUIRED_PRESETS = {
    "domain_randomization": ("protagonist",),
    "minimax": ("protagonist", "adversary"),
    "minimax_pbt": ("protagonist", "adversary"),
    "paired": ("protagonist", "antagonist", "adversary"),
    "flexible_paired": ("protagonist", "adversary"),
    "combined_pbt": ("protagonist", "adversary"),
}

SCALE_PRESETS = ("desk", "paper")


class ConfigError(ValueError):
    """Config file failed validation; message lists per-field problems."""


_OPTIM_FIELDS = {f.name for f in OptimConfig.__dataclass_fields__.values()}


@dataclass
class ExperimentConfig:
    strategy: str = "paired"
    presets: dict = field(default_factory=lambda: {
        "protagonist": "desk", "antagonist": "desk", "adversary": "desk"})
    grid_width: int = 15
    grid_height: int = 15
    block_budget: int = 50
    horizon: int = 250
    n_traj: int = 2
    clamp_regret: bool = True
    agent_signal: str = "env"
    population_size: int = 3
    envs_per_iteration: Optional[int] = None
    dr_block_range: Optional[tuple[int, int]] = None
    seeds: tuple[int, ...] = (0,)
    iterations: int = 10
    checkpoint_every: int = 0  # 0 = final checkpoint only
    agent_optim: OptimConfig = field(default_factory=OptimConfig)
    adversary_optim: OptimConfig = field(default_factory=OptimConfig)
    out_dir: str = "runs/latest"

    def ued_config(self) -> UEDConfig:
        workers = os.environ.get(WORKERS_ENV_VAR)
        envs = int(workers) if workers else self.envs_per_iteration
        return UEDConfig(
            strategy=self.strategy,
            grid_width=self.grid_width,
            grid_height=self.grid_height,
            block_budget=self.block_budget,
            horizon=self.horizon,
            n_traj=self.n_traj,
            clamp_regret=self.clamp_regret,
            agent_signal=self.agent_signal,
            envs_per_iteration=envs,
            population_size=self.population_size,
            dr_block_range=self.dr_block_range,
            scale=self.presets["protagonist"],
            agent_optim=self.agent_optim,
            adversary_optim=self.adversary_optim,
        )

    def to_dict(self) -> dict:
        def optim(cfg):
            return {name: getattr(cfg, name) for name in sorted(_OPTIM_FIELDS)}
        return {
            "schema_version": SCHEMA_VERSION,
            "strategy": self.strategy,
            "presets": dict(self.presets),
            "grid_width": self.grid_width,
            "grid_height": self.grid_height,
            "block_budget": self.block_budget,
            "horizon": self.horizon,
            "n_traj": self.n_traj,
            "clamp_regret": self.clamp_regret,
            "agent_signal": self.agent_signal,
            "population_size": self.population_size,
            "envs_per_iteration": self.envs_per_iteration,
            "dr_block_range": list(self.dr_block_range)
            if self.dr_block_range else None,
            "seeds": list(self.seeds),
            "iterations": self.iterations,
            "checkpoint_every": self.checkpoint_every,
            "agent_optim": optim(self.agent_optim),
            "adversary_optim": optim(self.adversary_optim),
            "out_dir": self.out_dir,
        }

    def config_hash(self) -> str:
        data = self.to_dict()
        data.pop("out_dir")  # where a run lands does not change what it is
        blob = json.dumps(data, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _parse_optim(raw, label: str, errors: list[str]) -> OptimConfig:
    if raw is None:
        return OptimConfig()
    if not isinstance(raw, dict):
        errors.append(f"{label}: expected an object")
        return OptimConfig()
    unknown = set(raw) - _OPTIM_FIELDS
    for name in sorted(unknown):
        errors.append(f"{label}.{name}: unknown field")
    kwargs = {k: v for k, v in raw.items() if k in _OPTIM_FIELDS}
    try:
        cfg = OptimConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{label}: {exc}")
        return OptimConfig()
    if cfg.learning_rate <= 0:
        errors.append(f"{label}.learning_rate: must be positive")
    if not 0 < cfg.discount <= 1:
        errors.append(f"{label}.discount: must be in (0, 1]")
    return cfg


def parse_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    """Validates a parsed config mapping; raises ConfigError listing every
    offending field."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: config root must be an object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        errors.append(
            f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    def take(name, default, kind):
        value = data.get(name, default)
        if value is None and default is None:
            return None
        if kind is int and isinstance(value, bool):
            errors.append(f"{name}: expected {kind.__name__}")
            return default
        if not isinstance(value, kind):
            errors.append(f"{name}: expected {kind.__name__}")
            return default
        return value

    strategy = take("strategy", "paired", str)
    if strategy not in STRATEGIES:
        errors.append(f"strategy: must be one of {', '.join(STRATEGIES)}")
        strategy = "paired"

    presets = data.get("presets", {"protagonist": "desk"})
    if not isinstance(presets, dict):
        errors.append("presets: expected an object mapping role to preset")
        presets = {"protagonist": "desk"}
    for role in REQUIRED_PRESETS[strategy]:
        if role not in presets:
            errors.append(f"presets.{role}: required for strategy {strategy}")
    for role, preset in sorted(presets.items()):
        if preset not in SCALE_PRESETS:
            errors.append(
                f"presets.{role}: unknown preset {preset!r} "
                f"(choices: {', '.join(SCALE_PRESETS)})")
    scales = {p for p in presets.values() if p in SCALE_PRESETS}
    if len(scales) > 1:
        errors.append("presets: all roles must use the same scale preset")
    presets = {role: presets.get(role, "desk")
               for role in ("protagonist", "antagonist", "adversary")}

    grid_width = take("grid_width", 15, int)
    grid_height = take("grid_height", 15, int)
    for name, value in (("grid_width", grid_width),
                        ("grid_height", grid_height)):
        if value < 3:
            errors.append(f"{name}: must be at least 3")
    block_budget = take("block_budget", 50, int)
    if block_budget < 0:
        errors.append("block_budget: must be non-negative")
    horizon = take("horizon", 250, int)
    if horizon < 1:
        errors.append("horizon: must be positive")
    n_traj = take("n_traj", 2, int)
    if n_traj < 1:
        errors.append("n_traj: must be positive")
    clamp_regret = take("clamp_regret", True, bool)
    agent_signal = take("agent_signal", "env", str)
    if agent_signal not in ("env", "regret"):
        errors.append("agent_signal: must be 'env' or 'regret'")
        agent_signal = "env"
    population_size = take("population_size", 3, int)
    if strategy in ("minimax_pbt", "combined_pbt") and population_size < 2:
        errors.append(f"population_size: {strategy} needs at least 2")
        population_size = 2
    envs = data.get("envs_per_iteration")
    if envs is not None and (not isinstance(envs, int) or envs < 1):
        errors.append("envs_per_iteration: must be a positive integer")
        envs = None
    block_range = data.get("dr_block_range")
    if block_range is not None:
        ok = (isinstance(block_range, (list, tuple)) and len(block_range) == 2
              and all(isinstance(v, int) for v in block_range)
              and 0 <= block_range[0] <= block_range[1])
        if ok:
            block_range = (block_range[0], block_range[1])
        else:
            errors.append("dr_block_range: expected [low, high] with "
                          "0 <= low <= high")
            block_range = None
    seeds = data.get("seeds", [0])
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) for s in seeds)):
        errors.append("seeds: expected a non-empty list of integers")
        seeds = [0]
    iterations = take("iterations", 10, int)
    if iterations < 1:
        errors.append("iterations: must be positive")
    checkpoint_every = take("checkpoint_every", 0, int)
    if checkpoint_every < 0:
        errors.append("checkpoint_every: must be non-negative")
    agent_optim = _parse_optim(data.get("agent_optim"), "agent_optim", errors)
    adversary_optim = _parse_optim(data.get("adversary_optim"),
                                   "adversary_optim", errors)
    out_dir = take("out_dir", "runs/latest", str)

    if errors:
        raise ConfigError(f"{source}: " + "; ".join(errors))
    return ExperimentConfig(
        strategy=strategy,
        presets=presets,
        grid_width=grid_width,
        grid_height=grid_height,
        block_budget=block_budget,
        horizon=horizon,
        n_traj=n_traj,
        clamp_regret=clamp_regret,
        agent_signal=agent_signal,
        population_size=population_size,
        envs_per_iteration=envs,
        dr_block_range=block_range,
        seeds=tuple(seeds),
        iterations=iterations,
        checkpoint_every=checkpoint_every,
        agent_optim=agent_optim,
        adversary_optim=adversary_optim,
        out_dir=out_dir,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from exc
    return parse_config(data, source=str(path))


def _representative_policy(state: TrainState) -> PolicyHandle:
    """The policy a run deploys: the protagonist, or the first population
    member for population strategies."""
    if state.protagonist is not None:
        return state.protagonist
    return state.agent_population[0]


def _metrics_row(seed: int, metrics) -> list[str]:
    values = [
        seed,
        metrics.iteration,
        metrics.mean("num_blocks"),
        metrics.mean("distance_to_goal"),
        metrics.mean("passable_path_length"),
        metrics.solved_path_length,
        metrics.regret_raw,
        metrics.regret_clamped,
        metrics.protagonist_mean_return,
        metrics.antagonist_mean_return,
    ]
    return [v if isinstance(v, int) else format(v, ".10g") for v in values]


def cli_train(config: ExperimentConfig, out_dir=None) -> Path:
    """Runs every seed of the configured experiment; returns the run dir.

    Layout: manifest.json, metrics.csv, events.jsonl, and one checkpoint per
    seed (plus periodic ones when checkpoint_every > 0).
    """
    run_dir = Path(out_dir if out_dir is not None else config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "metrics_columns": METRICS_COLUMNS,
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    ued = config.ued_config()
    events = open(run_dir / "events.jsonl", "w")

    def log(event, **fields):
        events.write(json.dumps({"event": event, **fields},
                                sort_keys=True) + "\n")

    try:
        with open(run_dir / "metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(METRICS_COLUMNS)
            for seed in config.seeds:
                log("seed_start", seed=seed)
                state = init_train_state(ued, seed)
                for _ in range(config.iterations):
                    try:
                        state, metrics = run_iteration(state, ued)
                    except ArithmeticError as exc:
                        log("abort", seed=seed, iteration=state.iteration,
                            reason=str(exc))
                        raise
                    writer.writerow(_metrics_row(seed, metrics))
                    if (config.checkpoint_every
                            and metrics.iteration % config.checkpoint_every == 0):
                        save_policy(
                            run_dir / f"seed{seed}_iter{metrics.iteration:05d}.ckpt",
                            _representative_policy(state), "protagonist")
                save_policy(run_dir / f"seed{seed}_final.ckpt",
                            _representative_policy(state), "protagonist")
                log("seed_done", seed=seed)
    finally:
        events.close()
    return run_dir


@dataclass
class EvalRow:
    map_name: str
    successes: int
    trials: int

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def confidence_interval(self) -> tuple[float, float]:
        """95% normal-approximation binomial interval, clipped to [0, 1]."""
        if not self.trials:
            return (0.0, 0.0)
        p = self.rate
        half = 1.96 * math.sqrt(p * (1 - p) / self.trials)
        return (max(0.0, p - half), min(1.0, p + half))


def bundled_suite_dir() -> Path:
    return Path(resources.files("uedlab") / "maps")


def evaluate_policy(policy: PolicyHandle, suite_dir, trials_per_map: int = 10,
                    n_seeds: int = 5, horizon: Optional[int] = None,
                    map_names=None) -> list[EvalRow]:
    """Zero-shot transfer table: per map, success counts over
    trials_per_map episodes for each of n_seeds eval seeds.

    Success is reaching the goal within the horizon (positive episode
    return).  Fully deterministic for a fixed policy and seed list.
    """
    if policy.spec.latent_dim:
        raise CheckpointError(
            "checkpoint holds an environment-designer policy, not an agent")
    suite_dir = Path(suite_dir)
    if map_names is None:
        paths = sorted(suite_dir.glob("*.txt"))
    else:
        paths = [suite_dir / f"{name}.txt" for name in map_names]
    if not paths:
        raise FileNotFoundError(f"no map files in {suite_dir}")
    rows = []
    for map_index, path in enumerate(paths):
        grid = parse_map(path.read_text(),
                         horizon=horizon if horizon else 250)
        metrics = grid_metrics(grid)
        if metrics.passable_path_length <= 0:
            raise ValueError(f"{path.name}: goal unreachable")
        successes = 0
        trials = 0
        for seed in range(n_seeds):
            rng = np.random.default_rng([map_index, seed])
            env = MazeEnv(grid)
            for _ in range(trials_per_map):
                traj = run_episode(policy, env, rng)
                trials += 1
                if traj.undiscounted_return() > 0:
                    successes += 1
        rows.append(EvalRow(path.stem, successes, trials))
    return rows


def cli_eval(checkpoint_path, suite_dir=None, trials_per_map: int = 10,
             n_seeds: int = 5, horizon: Optional[int] = None) -> list[EvalRow]:
    policy, _role = load_policy(checkpoint_path)
    if suite_dir is None:
        suite_dir = bundled_suite_dir()
        return evaluate_policy(policy, suite_dir, trials_per_map, n_seeds,
                               horizon, map_names=TRANSFER_MAPS)
    return evaluate_policy(policy, suite_dir, trials_per_map, n_seeds, horizon)


def format_eval_table(rows: list[EvalRow]) -> str:
    lines = [f"{'map':<16} {'success':>8} {'95% CI':>18}"]
    for row in rows:
        lo, hi = row.confidence_interval()
        lines.append(f"{row.map_name:<16} {row.rate:>7.1%} "
                     f"[{lo:>6.1%}, {hi:>6.1%}]  ({row.successes}/{row.trials})")
    return "\n".join(lines)


def cli_decide(game_path, rule: str, show_regret: bool = False,
               show_lambda: bool = False) -> str:
    """Solves the game for the requested decision rule; returns report text."""
    if rule not in DECISION_RULES:
        raise ConfigError(
            f"rule: unknown rule {rule!r} "
            f"(choices: {', '.join(sorted(DECISION_RULES))})")
    game = load_game_csv(Path(game_path).read_text())
    chosen = DECISION_RULES[rule](game)
    labels = [game.policy_labels[i] for i in chosen]
    lines = [f"rule: {rule}", f"chosen: {{{', '.join(labels)}}}"]
    if show_regret:
        reg = regret_matrix(game)
        lines.append("regret matrix:")
        header = "  ".join(f"{p:>10}" for p in game.param_labels)
        lines.append(f"{'':<10}  {header}")
        for label, row in zip(game.policy_labels, reg):
            cells = "  ".join(f"{v:>10.4g}" for v in row)
            lines.append(f"{label:<10}  {cells}")
    if show_lambda:
        lines.append("environment-policy distributions:")
        for i, comp in sorted(construct_lambda_mr(game).items()):
            weights = ", ".join(f"{game.param_labels[j]}: {w:.4g}"
                                for j, w in sorted(comp.baseline.items()))
            lines.append(f"  {game.policy_labels[i]}: {{{weights}}}")
    return "\n".join(lines)


PLOT_METRICS = [c for c in METRICS_COLUMNS if c not in ("seed", "iteration")]


def cli_plot(run_dir, out_dir=None) -> list[Path]:
    """Renders one SVG per metric column: per-iteration mean across seeds
    with a 95% confidence band (omitted for single-seed runs)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = run_dir / "metrics.csv"
    if not metrics_path.exists():
        raise FileNotFoundError(f"{metrics_path}: no metrics.csv in run dir")
    with open(metrics_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            rows = []
        else:
            missing = [c for c in METRICS_COLUMNS
                       if c not in reader.fieldnames]
            if missing:
                raise ValueError(
                    f"{metrics_path}: missing columns {', '.join(missing)}")
            rows = list(reader)
    written = []
    for metric in PLOT_METRICS:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        if not rows:
            ax.text(0.5, 0.5, "no data", ha="center", va="center",
                    transform=ax.transAxes)
        else:
            by_iter: dict[int, list[float]] = {}
            for row in rows:
                by_iter.setdefault(int(row["iteration"]), []).append(
                    float(row[metric]))
            iters = sorted(by_iter)
            means = np.array([np.mean(by_iter[i]) for i in iters])
            counts = np.array([len(by_iter[i]) for i in iters])
            ax.plot(iters, means, color="tab:blue")
            if counts.min() > 1:
                stderr = np.array([
                    np.std(by_iter[i], ddof=1) / math.sqrt(len(by_iter[i]))
                    for i in iters
                ])
                ax.fill_between(iters, means - 1.96 * stderr,
                                means + 1.96 * stderr,
                                color="tab:blue", alpha=0.25, linewidth=0)
            ax.set_xlabel("iteration")
        ax.set_ylabel(metric)
        fig.tight_layout()
        path = out_dir / f"{metric}.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        written.append(path)
    return written

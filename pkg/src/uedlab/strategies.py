"""The six environment-design training strategies and their shared outer loop.

Each iteration: generate a batch of environments (by the strategy's designer),
collect agent trajectories in them, convert returns into the strategy's
adversary reward, and apply one RL update per trained policy.

minimax is implemented as the population strategy with singleton populations,
so the two are behaviorally identical given the same seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import core, designer, gridworld
from .core import RegretEstimate, Trajectory, discounted_return, per_step_penalty
from .gridworld import Grid, GridMetrics, MazeEnv, grid_metrics
from .learner import (
    EpisodeActor,
    NetworkSpec,
    OptimConfig,
    PolicyHandle,
    RolloutBatch,
    desk_scale_spec,
    paper_scale_spec,
    run_episode,
    update,
)

STRATEGIES = (
    "domain_randomization",
    "minimax",
    "minimax_pbt",
    "paired",
    "flexible_paired",
    "combined_pbt",
)


@dataclass
class UEDConfig:
    strategy: str = "paired"
    grid_width: int = 15
    grid_height: int = 15
    block_budget: int = 50
    horizon: int = 250
    antagonist_horizon: Optional[int] = None  # defaults to horizon
    n_traj: int = 2
    clamp_regret: bool = True
    agent_signal: str = "env"  # "env" or "regret" (per-step penalty variant)
    envs_per_iteration: Optional[int] = None  # defaults to workers_per_batch
    population_size: int = 3  # minimax_pbt / combined_pbt
    dr_block_range: Optional[tuple[int, int]] = None  # defaults to (0, budget)
    scale: str = "desk"  # "desk" or "paper" network presets
    adversary_conv_filters: Optional[int] = None
    agent_optim: OptimConfig = field(default_factory=OptimConfig)
    adversary_optim: OptimConfig = field(default_factory=OptimConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.agent_signal not in ("env", "regret"):
            raise ValueError("agent_signal must be 'env' or 'regret'")
        if self.strategy in ("minimax_pbt", "combined_pbt") and \
                self.population_size < 2:
            raise ValueError(f"{self.strategy} requires population_size >= 2")

    @property
    def n_envs(self) -> int:
        return self.envs_per_iteration or self.agent_optim.workers_per_batch

    @property
    def antag_horizon(self) -> int:
        return self.antagonist_horizon or self.horizon

    @property
    def block_range(self) -> tuple[int, int]:
        return self.dr_block_range or (0, self.block_budget)

    def agent_spec(self) -> NetworkSpec:
        make = desk_scale_spec if self.scale == "desk" else paper_scale_spec
        return make((gridworld.VIEW_SIZE, gridworld.VIEW_SIZE, 3),
                    n_actions=len(gridworld.ACTIONS), direction_embed=5)

    def adversary_spec(self) -> NetworkSpec:
        make = desk_scale_spec if self.scale == "desk" else paper_scale_spec
        n_tiles = (self.grid_width - 2) * (self.grid_height - 2)
        overrides = dict(timestep_embed=10, latent_dim=designer.LATENT_DIM)
        if self.adversary_conv_filters:
            overrides["conv_filters"] = self.adversary_conv_filters
        elif self.scale == "paper":
            overrides["conv_filters"] = 64
        return make((self.grid_height, self.grid_width, 3),
                    n_actions=n_tiles, **overrides)


@dataclass
class TrainState:
    strategy: str
    rng: np.random.Generator
    protagonist: Optional[PolicyHandle] = None
    antagonist: Optional[PolicyHandle] = None
    adversary: Optional[PolicyHandle] = None
    agent_population: Optional[list] = None
    adversary_population: Optional[list] = None
    iteration: int = 0


@dataclass
class IterationMetrics:
    iteration: int
    env_metrics: list[GridMetrics]
    regret_raw: float
    regret_clamped: float
    protagonist_mean_return: float
    antagonist_mean_return: float
    solved_path_length: int

    def mean(self, field_name: str) -> float:
        return float(np.mean([getattr(m, field_name) for m in self.env_metrics]))


def init_train_state(config: UEDConfig, seed: int) -> TrainState:
    """Randomly initialize every policy the chosen strategy needs."""
    rng = np.random.default_rng(seed)
    state = TrainState(strategy=config.strategy, rng=rng)
    agent_spec = config.agent_spec()
    adv_spec = config.adversary_spec()
    if config.strategy == "domain_randomization":
        state.protagonist = PolicyHandle.create(agent_spec, rng)
    elif config.strategy == "minimax":
        state.protagonist = PolicyHandle.create(agent_spec, rng)
        state.adversary = PolicyHandle.create(adv_spec, rng)
    elif config.strategy == "minimax_pbt":
        k = config.population_size
        state.agent_population = [PolicyHandle.create(agent_spec, rng)
                                  for _ in range(k)]
        state.adversary_population = [PolicyHandle.create(adv_spec, rng)
                                      for _ in range(k)]
    elif config.strategy == "paired":
        state.protagonist = PolicyHandle.create(agent_spec, rng)
        state.antagonist = PolicyHandle.create(agent_spec, rng)
        state.adversary = PolicyHandle.create(adv_spec, rng)
    elif config.strategy == "flexible_paired":
        state.agent_population = [PolicyHandle.create(agent_spec, rng)
                                  for _ in range(2)]
        state.adversary = PolicyHandle.create(adv_spec, rng)
    elif config.strategy == "combined_pbt":
        k = config.population_size
        state.agent_population = [PolicyHandle.create(agent_spec, rng)
                                  for _ in range(k)]
        state.adversary_population = [PolicyHandle.create(adv_spec, rng)
                                      for _ in range(k)]
    return state


def make_actor(policy, rng: np.random.Generator):
    """EpisodeActor for trained policies; duck-typed hook for test stubs."""
    if isinstance(policy, PolicyHandle):
        return EpisodeActor(policy, rng)
    return policy.episode_actor(rng)


def _is_trainable(policy) -> bool:
    return isinstance(policy, PolicyHandle)


def _design_env(adversary, config: UEDConfig, seed) -> tuple[Grid, Trajectory]:
    rng = np.random.default_rng(seed)
    actor = make_actor(adversary, rng)
    return designer.adversary_episode(
        actor,
        rng_seed=rng,
        width=config.grid_width,
        height=config.grid_height,
        block_budget=config.block_budget,
        horizon=config.horizon,
    )


def _collect(policy, grid: Grid, n_traj: int, config: UEDConfig,
             seed, horizon: Optional[int] = None) -> list[Trajectory]:
    rng = np.random.default_rng(seed)
    if horizon is not None and horizon != grid.horizon:
        grid = Grid(grid.cells.copy(), grid.agent_start, grid.agent_start_dir,
                    horizon)
    env = MazeEnv(grid)
    trajs = []
    for _ in range(n_traj):
        if _is_trainable(policy):
            trajs.append(run_episode(policy, env, rng))
        else:
            trajs.append(_stub_episode(policy, env, rng))
    return trajs


def _stub_episode(policy, env, rng) -> Trajectory:
    actor = policy.episode_actor(rng)
    actor.reset()
    obs = env.reset()
    traj = Trajectory(observations=[obs], actions=[], rewards=[])
    done = False
    while not done:
        action, log_prob, value = actor.act(obs)
        obs, reward, done = env.step(action)
        traj.observations.append(obs)
        traj.actions.append(int(action))
        traj.rewards.append(float(reward))
        traj.log_probs.append(float(log_prob))
        traj.values.append(float(value))
    traj.terminated = True
    return traj


def _utility(traj: Trajectory, discount: float) -> float:
    return discounted_return(traj.rewards, discount).value


def _apply_penalty(trajs: list[Trajectory], penalty: float):
    """Subtracts a per-step penalty from every step's reward, post-hoc."""
    out = []
    for traj in trajs:
        out.append(Trajectory(
            observations=traj.observations,
            actions=traj.actions,
            rewards=[r - penalty for r in traj.rewards],
            terminated=traj.terminated,
            log_probs=traj.log_probs,
            values=traj.values,
        ))
    return out


def _train(policy, trajs: list[Trajectory], optim: OptimConfig, seed):
    if _is_trainable(policy) and trajs:
        update(policy, RolloutBatch(trajs), optim,
               np.random.default_rng(seed))


def _set_terminal_reward(traj: Trajectory, reward: float):
    traj.rewards[-1] = float(reward)


def solved_path_length(batch_results: list[tuple[GridMetrics, bool]]) -> int:
    """Longest passable path among the environments the protagonist solved."""
    solved = [m.passable_path_length for m, success in batch_results if success]
    return max(solved) if solved else 0


def _finite_or_raise(value: float, label: str):
    if not np.isfinite(value):
        raise ArithmeticError(f"non-finite {label} in iteration")


def paired_iteration(state: TrainState, config: UEDConfig):
    """Algorithm: adversary designs, protagonist/antagonist both play, the
    adversary is rewarded with the clamped batched regret."""
    rng = state.rng
    seeds = rng.integers(2 ** 63, size=(config.n_envs, 4))
    adv_trajs, prot_trajs_all, antag_trajs_all = [], [], []
    env_metrics, results = [], []
    regrets: list[RegretEstimate] = []
    gamma = config.agent_optim.discount
    for e in range(config.n_envs):
        grid, adv_traj = _design_env(state.adversary, config, seeds[e, 0])
        prot_trajs = _collect(state.protagonist, grid, config.n_traj, config,
                              seeds[e, 1])
        antag_trajs = _collect(state.antagonist, grid, config.n_traj, config,
                               seeds[e, 2], horizon=config.antag_horizon)
        a_returns = [_utility(t, gamma) for t in antag_trajs]
        p_returns = [_utility(t, gamma) for t in prot_trajs]
        est = core.regret_batch(a_returns, p_returns, clamp=True)
        _finite_or_raise(est.raw, "regret")
        regrets.append(est)
        _set_terminal_reward(
            adv_traj, est.clamped if config.clamp_regret else est.raw
        )
        adv_trajs.append(adv_traj)
        if config.agent_signal == "regret":
            prot_trajs = _apply_penalty(
                prot_trajs,
                per_step_penalty(max(a_returns), config.horizon),
            )
            antag_trajs = _apply_penalty(
                antag_trajs,
                per_step_penalty(max(p_returns), config.antag_horizon),
            )
        prot_trajs_all.extend(prot_trajs)
        antag_trajs_all.extend(antag_trajs)
        metrics = grid_metrics(grid)
        env_metrics.append(metrics)
        success = any(t.undiscounted_return() > 0 for t in prot_trajs)
        results.append((metrics, success))
    _train(state.protagonist, prot_trajs_all, config.agent_optim, seeds[0, 3])
    _train(state.antagonist, antag_trajs_all, config.agent_optim,
           seeds[min(1, config.n_envs - 1), 3])
    _train(state.adversary, adv_trajs, config.adversary_optim,
           seeds[min(2, config.n_envs - 1), 3])
    state.iteration += 1
    return state, _metrics(state, env_metrics, regrets, results)


def _metrics(state, env_metrics, regrets, results) -> IterationMetrics:
    raw = float(np.mean([r.raw for r in regrets])) if regrets else 0.0
    clamped = float(np.mean([r.clamped for r in regrets])) if regrets else 0.0
    p_mean = float(np.mean([r.protagonist_mean for r in regrets])) \
        if regrets else 0.0
    a_mean = float(np.mean([r.antagonist_max for r in regrets])) \
        if regrets else 0.0
    return IterationMetrics(
        iteration=state.iteration,
        env_metrics=env_metrics,
        regret_raw=raw,
        regret_clamped=clamped,
        protagonist_mean_return=p_mean,
        antagonist_mean_return=a_mean,
        solved_path_length=solved_path_length(results),
    )


def _pbt_minimax_core(state: TrainState, config: UEDConfig,
                      adversaries: list, agents: list):
    """Shared core of minimax and PBT minimax.  Singleton populations skip
    the sampling draw so both strategies consume identical rng streams."""
    rng = state.rng
    seeds = rng.integers(2 ** 63, size=(config.n_envs, 3))
    gamma = config.agent_optim.discount
    adv_trajs = {i: [] for i in range(len(adversaries))}
    agent_trajs = {i: [] for i in range(len(agents))}
    env_metrics, results = [], []
    regrets = []
    for e in range(config.n_envs):
        adv_i = int(rng.integers(len(adversaries))) if len(adversaries) > 1 else 0
        agent_i = int(rng.integers(len(agents))) if len(agents) > 1 else 0
        grid, adv_traj = _design_env(adversaries[adv_i], config, seeds[e, 0])
        trajs = _collect(agents[agent_i], grid, config.n_traj, config,
                         seeds[e, 1])
        p_returns = [_utility(t, gamma) for t in trajs]
        mean_return = float(np.mean(p_returns))
        _finite_or_raise(mean_return, "protagonist return")
        # Minimax adversary reward: negated mean protagonist return.  This
        # equals the paired regret with antagonist returns forced to 0 and
        # clamping off.
        est = core.regret_batch([0.0], p_returns, clamp=False)
        regrets.append(est)
        _set_terminal_reward(adv_traj, -mean_return)
        adv_trajs[adv_i].append(adv_traj)
        agent_trajs[agent_i].extend(trajs)
        metrics = grid_metrics(grid)
        env_metrics.append(metrics)
        results.append((metrics, any(t.undiscounted_return() > 0 for t in trajs)))
    update_seeds = rng.integers(2 ** 63, size=len(agents) + len(adversaries))
    for i, agent in enumerate(agents):
        _train(agent, agent_trajs[i], config.agent_optim, update_seeds[i])
    for i, adv in enumerate(adversaries):
        _train(adv, adv_trajs[i], config.adversary_optim,
               update_seeds[len(agents) + i])
    state.iteration += 1
    return state, _metrics(state, env_metrics, regrets, results)


def minimax_iteration(state: TrainState, config: UEDConfig):
    """Antagonist-free adversarial training: the designer minimizes the
    protagonist's mean return."""
    return _pbt_minimax_core(state, config, [state.adversary],
                             [state.protagonist])


def pbt_minimax_iteration(state: TrainState, config: UEDConfig):
    """Minimax with adversary and agent sampled per episode from populations;
    only sampled members are updated."""
    if not state.adversary_population or not state.agent_population:
        raise ValueError("pbt strategies require initialized populations")
    return _pbt_minimax_core(state, config, state.adversary_population,
                             state.agent_population)


def _population_regret_core(state: TrainState, config: UEDConfig,
                            adversaries: list, agents: list):
    """Shared core of combined PBT and flexible paired: every agent plays one
    trajectory per environment, and the designer earns the population regret
    (best return minus mean return)."""
    rng = state.rng
    k = len(agents)
    seeds = rng.integers(2 ** 63, size=(config.n_envs, 1 + k))
    gamma = config.agent_optim.discount
    adv_trajs = {i: [] for i in range(len(adversaries))}
    agent_trajs = {i: [] for i in range(k)}
    env_metrics, results = [], []
    regrets = []
    for e in range(config.n_envs):
        adv_i = int(rng.integers(len(adversaries))) if len(adversaries) > 1 else 0
        grid, adv_traj = _design_env(adversaries[adv_i], config, seeds[e, 0])
        returns = []
        per_agent = []
        for i, agent in enumerate(agents):
            trajs = _collect(agent, grid, 1, config, seeds[e, 1 + i])
            per_agent.append(trajs)
            returns.append(_utility(trajs[0], gamma))
        pop_regret = core.regret_pop(returns)
        _finite_or_raise(pop_regret, "population regret")
        best = int(np.argmax(returns))
        regrets.append(RegretEstimate(
            raw=pop_regret, clamped=max(0.0, pop_regret),
            antagonist_max=float(max(returns)),
            protagonist_mean=float(np.mean(returns)),
        ))
        _set_terminal_reward(adv_traj, pop_regret)
        adv_trajs[adv_i].append(adv_traj)
        for i, trajs in enumerate(per_agent):
            if config.agent_signal == "regret":
                others_best = max(r for j, r in enumerate(returns) if j != i) \
                    if k > 1 else 0.0
                trajs = _apply_penalty(
                    trajs, per_step_penalty(others_best, config.horizon)
                )
            agent_trajs[i].extend(trajs)
        metrics = grid_metrics(grid)
        env_metrics.append(metrics)
        # The population's best member plays the antagonist role; the rest is
        # protagonist-side, so "solved" tracks any non-best member succeeding.
        success = any(
            t.undiscounted_return() > 0
            for i, trajs in enumerate(per_agent) if i != best or k == 1
            for t in trajs
        )
        results.append((metrics, success))
    update_seeds = rng.integers(2 ** 63, size=k + len(adversaries))
    for i, agent in enumerate(agents):
        _train(agent, agent_trajs[i], config.agent_optim, update_seeds[i])
    for i, adv in enumerate(adversaries):
        _train(adv, adv_trajs[i], config.adversary_optim, update_seeds[k + i])
    state.iteration += 1
    return state, _metrics(state, env_metrics, regrets, results)


def combined_pbt_iteration(state: TrainState, config: UEDConfig):
    if not state.agent_population or len(state.agent_population) < 2:
        raise ValueError("combined_pbt requires an agent population of >= 2")
    return _population_regret_core(state, config, state.adversary_population,
                                   state.agent_population)


def flexible_paired_iteration(state: TrainState, config: UEDConfig):
    """PAIRED without a fixed antagonist: two agents, and per environment the
    better one is treated as the antagonist for the regret."""
    if not state.agent_population or len(state.agent_population) != 2:
        raise ValueError("flexible_paired requires exactly 2 agents")
    return _population_regret_core(state, config, [state.adversary],
                                   state.agent_population)


def dr_iteration(state: TrainState, config: UEDConfig):
    """Domain randomization: uniform environments, no designer update."""
    rng = state.rng
    seeds = rng.integers(2 ** 63, size=(config.n_envs, 2))
    gamma = config.agent_optim.discount
    prot_trajs_all = []
    env_metrics, results, regrets = [], [], []
    for e in range(config.n_envs):
        grid = designer.random_design(
            np.random.default_rng(seeds[e, 0]),
            block_count_range=config.block_range,
            width=config.grid_width,
            height=config.grid_height,
            horizon=config.horizon,
        )
        trajs = _collect(state.protagonist, grid, config.n_traj, config,
                         seeds[e, 1])
        p_returns = [_utility(t, gamma) for t in trajs]
        regrets.append(core.regret_batch([0.0], p_returns, clamp=False))
        prot_trajs_all.extend(trajs)
        metrics = grid_metrics(grid)
        env_metrics.append(metrics)
        results.append((metrics, any(t.undiscounted_return() > 0 for t in trajs)))
    _train(state.protagonist, prot_trajs_all, config.agent_optim,
           rng.integers(2 ** 63))
    state.iteration += 1
    return state, _metrics(state, env_metrics, regrets, results)


ITERATION_FNS = {
    "domain_randomization": dr_iteration,
    "minimax": minimax_iteration,
    "minimax_pbt": pbt_minimax_iteration,
    "paired": paired_iteration,
    "flexible_paired": flexible_paired_iteration,
    "combined_pbt": combined_pbt_iteration,
}


def run_iteration(state: TrainState, config: UEDConfig):
    return ITERATION_FNS[config.strategy](state, config)

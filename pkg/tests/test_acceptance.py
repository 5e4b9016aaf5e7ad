"""End-to-end acceptance suite: one test per release criterion.

Each test prints a single ``acceptance NN <name>: PASS|FAIL`` line (visible
under ``pytest -s`` or in the captured output of a failing test) and then
asserts, so the criterion's status is always explicit.
"""

import time

import numpy as np

from helpers import finite_difference_check, random_episodes, spinner, tiny_spec
from test_decision import big_game, random_banded_game, small_game
from test_gridworld import brute_force_shortest_path
from test_strategies import (
    GoalSeeker,
    enclosing_adversary,
    stub_config,
    stub_state,
)
from uedlab.core import per_step_penalty, regret_batch, regret_pop
from uedlab.decision import (
    GameMatrix,
    SuccessBands,
    insufficient_reason,
    lambda_mr_expected_values,
    maximin,
    minimax_regret,
    nash_dominance_check,
    theorem1_check,
)
from uedlab.designer import design_reset, design_step
from uedlab.gridworld import WALL, MazeEnv, empty_grid
from uedlab.harness import bundled_suite_dir, evaluate_policy
from uedlab.learner import (
    OptimConfig,
    PolicyHandle,
    RolloutBatch,
    run_episode,
    update,
)
from uedlab.strategies import (
    UEDConfig,
    init_train_state,
    paired_iteration,
    run_iteration,
)


def report(number: int, name: str, ok: bool):
    print(f"acceptance {number:02d} {name}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"acceptance criterion {number} ({name}) failed"


def test_01_decision_rule_goldens():
    small, big = small_game(), big_game()
    ok = (maximin(small) == [0]
          and minimax_regret(small) == [1]
          and insufficient_reason(big) == [1, 2, 3, 4, 5]
          and minimax_regret(big) == [0])
    report(1, "decision-rule goldens", ok)


def test_02_banded_game_guarantee():
    bands = SuccessBands(s_min=75, s_max=100, f_min=-1, f_max=0)
    rng = np.random.default_rng(2)
    ok = True
    for _ in range(1000):
        rep = theorem1_check(random_banded_game(rng), bands)
        if not (rep.applicable and rep.passed):
            ok = False
            break
    report(2, "banded-game minimax-regret guarantee (1000 games)", ok)


def test_03_environment_distribution_equivalence():
    rng = np.random.default_rng(3)
    ok = True
    for _ in range(200):
        shape = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        game = GameMatrix(rng.integers(-10, 11, size=shape).astype(float))
        values = lambda_mr_expected_values(game)
        argmax = set(np.flatnonzero(values >= values.max() - 1e-9))
        if argmax != set(minimax_regret(game)):
            ok = False
            break
    report(3, "regret-maximizing distribution equivalence (200 games)", ok)


def test_04_nash_dominance():
    rng = np.random.default_rng(4)
    ok = all(
        nash_dominance_check(
            rng.integers(-5, 6, size=(3, 3)).astype(float)).passed
        for _ in range(1000)
    )
    report(4, "pure-Nash antagonist dominance (1000 games)", ok)


def test_05_regret_formula_oracles():
    rng = np.random.default_rng(5)
    ok = True
    for _ in range(10_000):
        n_a = int(rng.integers(1, 6))
        n_p = int(rng.integers(1, 6))
        ant = rng.normal(0, 3, size=n_a)
        pro = rng.normal(0, 3, size=n_p)
        # direct-summation oracles
        a_max = ant[0]
        for v in ant[1:]:
            if v > a_max:
                a_max = v
        p_mean = sum(pro) / len(pro)
        est = regret_batch(ant, pro)
        pop = rng.normal(0, 3, size=int(rng.integers(1, 7)))
        p_max = pop[0]
        for v in pop[1:]:
            if v > p_max:
                p_max = v
        horizon = int(rng.integers(1, 300))
        best = float(rng.normal(0, 3))
        if not (est.raw == a_max - p_mean
                and est.clamped == max(0.0, a_max - p_mean)
                and regret_pop(pop) == p_max - sum(pop) / len(pop)
                and per_step_penalty(best, horizon) == best / horizon):
            ok = False
            break
    report(5, "regret estimators vs direct summation (10^4 inputs)", ok)


def test_06_shortest_path_oracle():
    from uedlab.designer import random_design
    from uedlab.gridworld import shortest_path_length

    rng = np.random.default_rng(6)
    ok = True
    for _ in range(500):
        width = int(rng.integers(4, 8))
        height = int(rng.integers(4, 8))
        interior = (width - 2) * (height - 2)
        budget = int(rng.integers(0, interior - 1))
        grid = random_design(rng, (0, budget), width=width, height=height,
                             horizon=50)
        if shortest_path_length(grid) != brute_force_shortest_path(grid):
            ok = False
            break
    report(6, "BFS distance vs simple-path enumeration (500 grids)", ok)


def test_07_gradient_check():
    start = time.monotonic()
    rng = np.random.default_rng(7)
    policy = PolicyHandle.create(tiny_spec(timestep_embed=3, latent_dim=4),
                                 rng)
    episodes = random_episodes(policy, rng, n_episodes=2, length=5)
    config = OptimConfig(entropy_coef=0.01)
    err = finite_difference_check(policy, episodes, config, 200, rng)
    elapsed = time.monotonic() - start
    report(7, f"finite-difference gradient check (err {err:.2e}, "
              f"{elapsed:.1f}s)", err < 1e-4 and elapsed < 60)


def test_08_learning_sanity():
    start = time.monotonic()
    grid = empty_grid(width=5, height=5, agent_start=(1, 1),
                      agent_start_dir=0, goal=(3, 3), horizon=30)
    spec = UEDConfig().agent_spec()
    config = OptimConfig(optimizer="adam", learning_rate=3e-3,
                         entropy_coef=0.01, normalize_advantages=True,
                         discount=0.99)

    def trained_to_90(seed: int) -> bool:
        rng = np.random.default_rng(seed)
        policy = PolicyHandle.create(spec, rng)
        for step in range(300):
            trajs = [run_episode(policy, MazeEnv(grid), rng)
                     for _ in range(8)]
            update(policy, RolloutBatch(trajs), config, rng)
            if step % 10 == 9:
                wins = sum(
                    run_episode(policy, MazeEnv(grid), rng)
                    .undiscounted_return() > 0
                    for _ in range(20)
                )
                if wins >= 18:
                    return True
        return False

    solved = [trained_to_90(seed) for seed in (0, 1, 2)]
    elapsed = time.monotonic() - start
    report(8, f"empty-grid learning sanity ({sum(solved)}/3 seeds, "
              f"{elapsed:.0f}s)", all(solved) and elapsed < 300)


def test_09_environment_validity_fuzz():
    rng = np.random.default_rng(9)
    ok = True
    for _ in range(100_000):
        width = int(rng.integers(5, 10))
        height = int(rng.integers(5, 10))
        budget = int(rng.integers(0, 7))
        state = design_reset(rng, width=width, height=height,
                             block_budget=budget, horizon=50)
        n_tiles = state.n_tiles
        while not state.done:
            design_step(state, int(rng.integers(n_tiles)))
        grid = state.to_grid()  # validates structure
        interior_walls = int((grid.cells[1:-1, 1:-1] == WALL).sum())
        if interior_walls > budget:
            ok = False
            break
    report(9, "designer action-sequence fuzz (10^5 sequences)", ok)


def test_10_curriculum_direction():
    start = time.monotonic()
    iterations = 450
    seeds = (0, 1, 2)

    def optim():
        return OptimConfig(optimizer="adam", learning_rate=3e-3,
                           entropy_coef=0.01, normalize_advantages=True)

    results = {}
    for strategy in ("paired", "domain_randomization", "minimax"):
        ppl_first, ppl_last, spl, lab = [], [], [], []
        for seed in seeds:
            config = UEDConfig(strategy=strategy, grid_width=9, grid_height=9,
                               block_budget=15, horizon=120, n_traj=2,
                               envs_per_iteration=4, agent_optim=optim(),
                               adversary_optim=optim())
            state = init_train_state(config, seed)
            ppl, solved = [], []
            for _ in range(iterations):
                state, metrics = run_iteration(state, config)
                ppl.append(metrics.mean("passable_path_length"))
                solved.append(metrics.solved_path_length)
            k = iterations // 5
            ppl_first.append(np.mean(ppl[:k]))
            ppl_last.append(np.mean(ppl[-k:]))
            spl.append(np.mean(solved[-k:]))
            policy = state.protagonist or state.agent_population[0]
            rows = evaluate_policy(policy, bundled_suite_dir(),
                                   trials_per_map=10, n_seeds=5, horizon=120,
                                   map_names=("labyrinth_9",))
            lab.append(rows[0].rate)
        results[strategy] = {
            "ppl_first": float(np.mean(ppl_first)),
            "ppl_last": float(np.mean(ppl_last)),
            "spl": float(np.mean(spl)),
            "labyrinth": float(np.mean(lab)),
        }

    paired = results["paired"]
    dr = results["domain_randomization"]
    mm = results["minimax"]
    trend_up = paired["ppl_last"] > paired["ppl_first"]
    spl_best = paired["spl"] >= dr["spl"] and paired["spl"] >= mm["spl"]
    lab_best = (paired["labyrinth"] >= dr["labyrinth"]
                and paired["labyrinth"] >= mm["labyrinth"])
    elapsed = time.monotonic() - start
    detail = (f"trend {paired['ppl_first']:.2f}->{paired['ppl_last']:.2f}, "
              f"spl {paired['spl']:.1f} vs {dr['spl']:.1f}/{mm['spl']:.1f}, "
              f"labyrinth {paired['labyrinth']:.2f} vs "
              f"{dr['labyrinth']:.2f}/{mm['labyrinth']:.2f}, "
              f"{elapsed:.0f}s")
    report(10, f"curriculum direction ({detail})",
           trend_up and spl_best and lab_best and elapsed < 7200)


def test_11_unsolvable_environment_scores_zero():
    config = stub_config(block_budget=4)
    state = stub_state("paired", protagonist=spinner(),
                       antagonist=GoalSeeker(),
                       adversary=enclosing_adversary())
    _, metrics = paired_iteration(state, config)
    ok = (metrics.protagonist_mean_return == 0.0
          and metrics.antagonist_mean_return == 0.0
          and metrics.regret_raw == 0.0
          and metrics.regret_clamped == 0.0)
    report(11, "enclosed goal yields zero returns and zero adversary reward",
           ok)
